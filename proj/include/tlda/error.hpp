#ifndef TLDA_ERROR_HPP
#define TLDA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tlda {

enum class ErrorCode {
    DimensionMismatch,
    RankDeficient,
    NumericalBlowup,
    EmptyVocabulary,
    SourceUnreadable,
    OracleTooLarge,
    DegenerateFactor,
    DegenerateTopic,
    UnknownToken,
    InvalidArgument,
    BadFormat,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::SourceUnreadable: return "SourceUnreadable";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::DegenerateFactor: return "DegenerateFactor";
    case ErrorCode::DegenerateTopic: return "DegenerateTopic";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadFormat: return "BadFormat";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// Numeric failures map to exit code 3 in the CLI, everything else to 2.
    bool is_numeric() const noexcept {
        return code_ == ErrorCode::RankDeficient || code_ == ErrorCode::NumericalBlowup ||
               code_ == ErrorCode::DegenerateFactor || code_ == ErrorCode::DegenerateTopic;
    }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

inline void require_dims(bool cond, const std::string& what) {
    require(cond, ErrorCode::DimensionMismatch, what);
}

} // namespace tlda

#endif
