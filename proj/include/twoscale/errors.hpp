#pragma once

#include <stdexcept>
#include <string>

namespace twoscale {

// Three families, matching the CLI exit codes 2/3/4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct AssumptionError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

#define TWOSCALE_ERROR(Name, Base)  \
  struct Name : Base {              \
    using Base::Base;               \
  }

TWOSCALE_ERROR(DimensionMismatch, ConfigError);
TWOSCALE_ERROR(NonPositiveRate, ConfigError);
TWOSCALE_ERROR(NonPositiveInput, ConfigError);
TWOSCALE_ERROR(InsufficientPoints, ConfigError);
TWOSCALE_ERROR(NonPositiveValue, ConfigError);

TWOSCALE_ERROR(NotHurwitz, AssumptionError);
TWOSCALE_ERROR(HurwitzViolated, AssumptionError);
TWOSCALE_ERROR(ExhaustedResampling, AssumptionError);
TWOSCALE_ERROR(NotErgodic, AssumptionError);
TWOSCALE_ERROR(Reducible, AssumptionError);
TWOSCALE_ERROR(StepTooLarge, AssumptionError);
TWOSCALE_ERROR(ScheduleNotAdmissible, AssumptionError);
TWOSCALE_ERROR(BoundViolated, AssumptionError);
TWOSCALE_ERROR(ContractionViolated, AssumptionError);

TWOSCALE_ERROR(IllConditioned, NumericalError);
TWOSCALE_ERROR(SingularDelta, NumericalError);
TWOSCALE_ERROR(SingularA22, NumericalError);
TWOSCALE_ERROR(SingularFundamentalMatrix, NumericalError);
TWOSCALE_ERROR(InverseFailed, NumericalError);
TWOSCALE_ERROR(NonFinite, NumericalError);

#undef TWOSCALE_ERROR

}  // namespace twoscale
