#pragma once

#include <stdexcept>
#include <string>

namespace fednlp {

// Base class for all library errors. Subclasses identify which contract
// was violated so callers and tests can react to the category.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value; message names the offending field.
struct ConfigError : Error {
    using Error::Error;
};

// Token outside the active vocabulary, or dimension mismatch between a
// document and a vocabulary-sized structure.
struct VocabError : Error {
    using Error::Error;
};

// Tensor/ParamSet shape or congruence violation.
struct ShapeError : Error {
    using Error::Error;
};

// A record or tensor failed a data invariant (missing labels, non-finite
// values, malformed serialized input).
struct DataError : Error {
    using Error::Error;
};

// Cannot split records into the requested number of silos.
struct PartitionError : Error {
    using Error::Error;
};

// Statistics could not be fit (e.g. empty corpus).
struct FitError : Error {
    using Error::Error;
};

// A phenotype dataset ended up with fewer than two usable classes.
struct DatasetError : Error {
    using Error::Error;
};

// Label outside the declared class set.
struct LabelError : Error {
    using Error::Error;
};

// Non-positive aggregation weight.
struct WeightError : Error {
    using Error::Error;
};

// Model applied to an input it cannot process (e.g. empty document).
struct InferenceError : Error {
    using Error::Error;
};

// A federated round failed at some site; message carries the site index.
struct FederationError : Error {
    using Error::Error;
};

}  // namespace fednlp
