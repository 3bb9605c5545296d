#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature or label shapes disagree with the model.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Parameter vectors bound to different model specs were mixed.
class SpecMismatchError : public Error {
 public:
  using Error::Error;
};

class EmptyDataError : public Error {
 public:
  using Error::Error;
};

/// A class holds fewer rows than one shard, or the split parameters leave a
/// partition empty.
class ShardError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ClusterError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsim
