#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fluxtrader {

enum class ErrorCode {
    // market data
    MalformedLine,
    NonMonotonicTime,
    InvariantViolation,
    HttpError,
    PaginationGap,
    RateLimited,
    EmptySeries,
    InvalidThreshold,
    NonFiniteInput,
    EmptySampleList,
    // tensors
    ShapeMismatch,
    KernelLargerThanInput,
    WindowLargerThanInput,
    ProbabilityOutOfRange,
    NonFiniteValue,
    NotScalar,
    NoRecordedGraph,
    MissingGradient,
    NondeterministicFunction,
    // training
    EmptyDataset,
    DivergedLoss,
    SingleClassDataset,
    TooFewSamples,
    EmptyTestSet,
    // backtest
    SignalIndexOutOfRange,
    EmptyCurve,
    TooFewReturns,
    ZeroVariance,
    NoTrades,
    // pipeline
    InvalidConfig,
    GridTooLarge,
    IncompleteRun,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::PaginationGap: return "PaginationGap";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptySampleList: return "EmptySampleList";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::KernelLargerThanInput: return "KernelLargerThanInput";
    case ErrorCode::WindowLargerThanInput: return "WindowLargerThanInput";
    case ErrorCode::ProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::NoRecordedGraph: return "NoRecordedGraph";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::NondeterministicFunction: return "NondeterministicFunction";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::SignalIndexOutOfRange: return "SignalIndexOutOfRange";
    case ErrorCode::EmptyCurve: return "EmptyCurve";
    case ErrorCode::TooFewReturns: return "TooFewReturns";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::NoTrades: return "NoTrades";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::GridTooLarge: return "GridTooLarge";
    case ErrorCode::IncompleteRun: return "IncompleteRun";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Library-wide exception. `detail` carries the numeric payload some codes
/// have (line number for MalformedLine, HTTP status for HttpError).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, std::optional<std::int64_t> detail = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::int64_t> detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::optional<std::int64_t> detail_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

} // namespace fluxtrader
