#pragma once

#include <stdexcept>
#include <string>

namespace msm {

enum class ErrorCode {
    InvalidArgument,  // contract violation, bad dimensions, bad config
    Io,               // file not readable/writable
    Parse,            // malformed document
    Version,          // file format version mismatch
    Corrupt,          // checksum or payload damage
    Shape,            // document parsed but dimensions disagree
    Numeric,          // non-finite value where finiteness is required
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// hot paths pass literals; the string is only materialized on failure
inline void require(bool cond, const char* message,
                    ErrorCode code = ErrorCode::InvalidArgument) {
    if (!cond) throw Error(code, message);
}

inline void require(bool cond, const std::string& message,
                    ErrorCode code = ErrorCode::InvalidArgument) {
    if (!cond) throw Error(code, message);
}

} // namespace msm
