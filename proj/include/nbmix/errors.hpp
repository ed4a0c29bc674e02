#pragma once

#include <stdexcept>
#include <string>

namespace nbmix {

enum class ErrorKind {
    ParameterDomain,
    Shape,
    Degeneracy,
    InsufficientReplicates,
    UnsupportedDesign,
    Parse,
    Config,
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParameterDomain: return "parameter-domain";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Degeneracy: return "degeneracy";
        case ErrorKind::InsufficientReplicates: return "insufficient-replicates";
        case ErrorKind::UnsupportedDesign: return "unsupported-design";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

// Single exception type for the whole library; `module` records which
// subsystem raised it so the CLI can surface provenance.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message)
        : std::runtime_error("[" + module + "] " + message),
          kind_(kind),
          module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

[[noreturn]] inline void fail(ErrorKind kind, const char* module, const std::string& message) {
    throw Error(kind, module, message);
}

} // namespace nbmix
