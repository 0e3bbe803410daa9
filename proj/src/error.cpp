#include "syntrans/error.hpp"

namespace syntrans {

const char* errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::ZeroNorm: return "ZeroNorm";
    case Errc::SupportMismatch: return "SupportMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NoCachedForward: return "NoCachedForward";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::CorruptPayload: return "CorruptPayload";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::InsufficientCategories: return "InsufficientCategories";
    case Errc::MissingBank: return "MissingBank";
    case Errc::MissingDescriptor: return "MissingDescriptor";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::ProviderTimeout: return "ProviderTimeout";
    case Errc::ProviderError: return "ProviderError";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    case Errc::EmptyName: return "EmptyName";
    case Errc::InsufficientPairs: return "InsufficientPairs";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::MissingArtifact: return "MissingArtifact";
    }
    return "Unknown";
}

} // namespace syntrans
