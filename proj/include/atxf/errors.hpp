#pragma once

#include <stdexcept>
#include <string>

namespace atxf {

// Root of every error the toolkit raises. `kind()` is a stable short tag that
// the CLI and the HTTP layer surface to callers.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define ATXF_DEFINE_ERROR(Name, tag)                                          \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(tag, what) {}         \
    }

ATXF_DEFINE_ERROR(DimensionError, "dimension");
ATXF_DEFINE_ERROR(NumericError, "numeric");
ATXF_DEFINE_ERROR(ContractError, "contract");
ATXF_DEFINE_ERROR(ConfigError, "config");
ATXF_DEFINE_ERROR(SchemaError, "schema");
ATXF_DEFINE_ERROR(IoError, "io");
ATXF_DEFINE_ERROR(CorpusError, "corpus");
ATXF_DEFINE_ERROR(EncodingError, "encoding");
ATXF_DEFINE_ERROR(TransferError, "transfer");
ATXF_DEFINE_ERROR(CheckpointError, "checkpoint");
ATXF_DEFINE_ERROR(OrderingError, "ordering");
ATXF_DEFINE_ERROR(InputError, "input");
ATXF_DEFINE_ERROR(LookupError, "lookup");
ATXF_DEFINE_ERROR(StartupError, "startup");

#undef ATXF_DEFINE_ERROR

// Raised when training produces a non-finite loss. Carries the last epoch
// whose metrics were finite (0 when the first epoch already diverged).
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int last_stable_epoch)
        : Error("divergence", what), last_stable_epoch_(last_stable_epoch) {}

    int last_stable_epoch() const noexcept { return last_stable_epoch_; }

private:
    int last_stable_epoch_;
};

}  // namespace atxf
