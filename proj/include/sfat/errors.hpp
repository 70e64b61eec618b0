#pragma once

#include <stdexcept>
#include <string>

namespace sfat {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class LengthError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class AggregationError : public Error { public: using Error::Error; };
class ScoringError : public Error { public: using Error::Error; };
class EvaluationError : public Error { public: using Error::Error; };
class TrainingError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class UsageError : public Error { public: using Error::Error; };

}  // namespace sfat
