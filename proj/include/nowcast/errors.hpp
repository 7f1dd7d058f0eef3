#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nowcast {

// Every failure the library reports carries one of these kinds so callers
// (tests, the CLI exit-code mapping) can branch without string matching.
enum class ErrorKind {
    // grid_store
    BadMagic,
    TruncatedFile,
    DimensionMismatch,
    WrongFrameCount,
    NonConsecutive,
    CropTooLarge,
    EmptyTrainingSet,
    DegenerateQuantile,
    WrongLevelCount,
    InvalidGrid,
    // synthetic_weather
    ShiftTooLarge,
    InvalidScene,
    IoError,
    // baselines
    MissingFrame,
    DegenerateInput,
    // nowcast_net / losses
    ShapeMismatch,
    DomainError,
    ConflictingSpec,
    // trainer
    EmptySplit,
    NaNLoss,
    CheckpointVersionMismatch,
    BadCheckpoint,
    // verification / blender
    TooFewUnits,
    DegenerateMap,
    // config / cli
    ConfigError,
    UsageError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace nowcast
