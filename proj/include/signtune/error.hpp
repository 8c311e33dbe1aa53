#pragma once

#include <stdexcept>
#include <string>

namespace signtune {

// Process exit codes; every library error maps onto one of these.
enum class ExitCode : int {
    ok = 0,
    usage = 2,
    config = 3,
    data = 4,
    numeric = 5,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ExitCode exit_code() const noexcept { return code_; }

private:
    ExitCode code_;
};

#define SIGNTUNE_DEFINE_ERROR(Name, Code)                                          \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& what) : Error(ExitCode::Code, what) {}    \
    }

SIGNTUNE_DEFINE_ERROR(UsageError, usage);

SIGNTUNE_DEFINE_ERROR(ConfigError, config);
SIGNTUNE_DEFINE_ERROR(RangeError, config);
SIGNTUNE_DEFINE_ERROR(BatchSizeError, config);

SIGNTUNE_DEFINE_ERROR(DataError, data);
SIGNTUNE_DEFINE_ERROR(AlignmentError, data);
SIGNTUNE_DEFINE_ERROR(IntegrityError, data);
SIGNTUNE_DEFINE_ERROR(VersionError, data);
SIGNTUNE_DEFINE_ERROR(IoError, data);
SIGNTUNE_DEFINE_ERROR(MappingError, data);
SIGNTUNE_DEFINE_ERROR(IngestionError, data);
SIGNTUNE_DEFINE_ERROR(DuplicateError, data);
SIGNTUNE_DEFINE_ERROR(RegionError, data);
SIGNTUNE_DEFINE_ERROR(CoverageError, data);
SIGNTUNE_DEFINE_ERROR(LabelError, data);
SIGNTUNE_DEFINE_ERROR(ComparabilityError, data);
SIGNTUNE_DEFINE_ERROR(MissingInputError, data);

SIGNTUNE_DEFINE_ERROR(NumericError, numeric);
SIGNTUNE_DEFINE_ERROR(ValidityError, numeric);
SIGNTUNE_DEFINE_ERROR(DivisionGuardError, numeric);
SIGNTUNE_DEFINE_ERROR(DegenerateInputError, numeric);
SIGNTUNE_DEFINE_ERROR(NormalizationError, numeric);

#undef SIGNTUNE_DEFINE_ERROR

}  // namespace signtune
