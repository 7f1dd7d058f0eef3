#include "nowcast/errors.hpp"

namespace nowcast {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::TruncatedFile: return "TruncatedFile";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::WrongFrameCount: return "WrongFrameCount";
        case ErrorKind::NonConsecutive: return "NonConsecutive";
        case ErrorKind::CropTooLarge: return "CropTooLarge";
        case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorKind::DegenerateQuantile: return "DegenerateQuantile";
        case ErrorKind::WrongLevelCount: return "WrongLevelCount";
        case ErrorKind::InvalidGrid: return "InvalidGrid";
        case ErrorKind::ShiftTooLarge: return "ShiftTooLarge";
        case ErrorKind::InvalidScene: return "InvalidScene";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::MissingFrame: return "MissingFrame";
        case ErrorKind::DegenerateInput: return "DegenerateInput";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::ConflictingSpec: return "ConflictingSpec";
        case ErrorKind::EmptySplit: return "EmptySplit";
        case ErrorKind::NaNLoss: return "NaNLoss";
        case ErrorKind::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
        case ErrorKind::BadCheckpoint: return "BadCheckpoint";
        case ErrorKind::TooFewUnits: return "TooFewUnits";
        case ErrorKind::DegenerateMap: return "DegenerateMap";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::UsageError: return "UsageError";
    }
    return "UnknownError";
}

}  // namespace nowcast
