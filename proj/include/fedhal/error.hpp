#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedhal {

/// Shape or width disagreement between operands.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of the operation.
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Batch composition unusable (too small, single class, singleton label).
struct batch_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Label index outside the classifier's output range.
struct label_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested batch cannot be drawn from the dataset.
struct sampling_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset-level problem (empty set, malformed labels).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Federated protocol violation (missing/duplicate/stale upload).
struct protocol_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Optimization produced non-finite values.
struct training_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. consuming a backward cache twice.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Retrieval evaluation cannot proceed (query label absent from gallery).
struct eval_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File or filesystem failure.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed byte payload; carries the offset where decoding failed.
struct parse_error : std::runtime_error {
  parse_error(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

}  // namespace fedhal
