#pragma once

#include <stdexcept>
#include <string>

namespace cgflow {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// graph
struct CycleDetected : Error { using Error::Error; };
struct DuplicateNode : Error { using Error::Error; };
struct UnknownNodeInEdge : Error { using Error::Error; };
struct EmptySpec : Error { using Error::Error; };
struct UnknownNode : Error { using Error::Error; };

// numerics
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct LossNotScalar : Error { using Error::Error; };
struct NodeNotOnTape : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct RootNotBracketed : Error { using Error::Error; };

// data / training
struct NonIntegerInput : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct ColumnMismatch : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptFile : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// estimation
struct ModelMissing : Error { using Error::Error; };
struct EmptyUnits : Error { using Error::Error; };
struct MissingGroupKey : Error { using Error::Error; };
struct MissingObservedTreatment : Error { using Error::Error; };
struct RowOutOfRange : Error { using Error::Error; };
struct PositivityViolation : Error { using Error::Error; };
struct UnsupportedMechanism : Error { using Error::Error; };
struct ScmParseError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace cgflow
