#include "irmap/error.hpp"

namespace irmap {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Parameter: return "parameter error";
        case ErrorKind::DegenerateHistogram: return "degenerate histogram";
        case ErrorKind::BelowFloor: return "below floor";
        case ErrorKind::IllConditioned: return "ill-conditioned";
        case ErrorKind::Degeneracy: return "degenerate configuration";
        case ErrorKind::Horizon: return "horizon";
        case ErrorKind::Truncation: return "truncated input";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::OutOfFrame: return "out of frame";
        case ErrorKind::NoPrescan: return "no pre-scan frame";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Corruption: return "corruption";
        case ErrorKind::NotFound: return "not found";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Invariant: return "invariant violation";
        case ErrorKind::Io: return "i/o error";
    }
    return "error";
}

}  // namespace irmap
