#pragma once

#include <stdexcept>
#include <string>

namespace syntrans {

// Error categories surfaced across the pipeline. The CLI prints the category
// name as a single machine-parsable token, so names are stable API.
enum class Errc {
    ZeroNorm,
    SupportMismatch,
    ShapeMismatch,
    NoCachedForward,
    BadMagic,
    VersionUnsupported,
    CorruptPayload,
    LabelOutOfRange,
    InsufficientSamples,
    InsufficientCategories,
    MissingBank,
    MissingDescriptor,
    DimMismatch,
    ProviderTimeout,
    ProviderError,
    MissingCheckpoint,
    EmptyName,
    InsufficientPairs,
    ConfigInvalid,
    MissingArtifact,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace syntrans
