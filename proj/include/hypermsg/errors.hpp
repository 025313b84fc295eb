#pragma once

#include <stdexcept>
#include <string>

namespace hypermsg {

enum class ErrorCode {
  OutOfRangeNodeId,
  DuplicateNodeInEdge,
  SingletonEdge,
  NodeNotInEdge,
  SizeMismatch,
  InvalidSplitPlan,
  ShapeMismatch,
  NonFiniteValue,
  NotScalarLoss,
  MissingGradient,
  EmptySet,
  ZeroPower,
  EmptyNeighborhood,
  NoLabeledNodes,
  InsufficientLabels,
  UnknownNodeId,
  EmptyEmbedding,
  HyperedgeNotPairwise,
  DimMismatch,
  InvalidArgument,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::OutOfRangeNodeId: return "OutOfRangeNodeId";
    case ErrorCode::DuplicateNodeInEdge: return "DuplicateNodeInEdge";
    case ErrorCode::SingletonEdge: return "SingletonEdge";
    case ErrorCode::NodeNotInEdge: return "NodeNotInEdge";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::InvalidSplitPlan: return "InvalidSplitPlan";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ZeroPower: return "ZeroPower";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::NoLabeledNodes: return "NoLabeledNodes";
    case ErrorCode::InsufficientLabels: return "InsufficientLabels";
    case ErrorCode::UnknownNodeId: return "UnknownNodeId";
    case ErrorCode::EmptyEmbedding: return "EmptyEmbedding";
    case ErrorCode::HyperedgeNotPairwise: return "HyperedgeNotPairwise";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception; `code()` identifies the failure class so callers
/// and tests can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace hypermsg
