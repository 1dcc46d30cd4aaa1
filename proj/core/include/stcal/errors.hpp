#pragma once

#include <stdexcept>
#include <string>

namespace stcal {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define STCAL_DEFINE_ERROR(NAME)                                  \
  class NAME : public Error {                                     \
  public:                                                         \
    explicit NAME(const std::string& msg = #NAME) : Error(msg) {} \
  }

// geometry
STCAL_DEFINE_ERROR(NonPositiveDepth);
STCAL_DEFINE_ERROR(DegenerateGeometry);
STCAL_DEFINE_ERROR(ZeroVector);

// pose encoding
STCAL_DEFINE_ERROR(SkeletonMismatch);
STCAL_DEFINE_ERROR(OutOfRange);

// vMF / registration
STCAL_DEFINE_ERROR(EmptyInput);
STCAL_DEFINE_ERROR(NoValidData);
STCAL_DEFINE_ERROR(InsufficientOverlap);

// translation
STCAL_DEFINE_ERROR(RankDeficient);
STCAL_DEFINE_ERROR(CheiralityAmbiguous);

// multiview / stba
STCAL_DEFINE_ERROR(DisconnectedGraph);
STCAL_DEFINE_ERROR(InsufficientObservations);

// metrics
STCAL_DEFINE_ERROR(CountMismatch);
STCAL_DEFINE_ERROR(DegenerateBaseline);
STCAL_DEFINE_ERROR(NoGroundTruth);

// io
STCAL_DEFINE_ERROR(SchemaError);
STCAL_DEFINE_ERROR(InvalidSpec);

class ParseError : public Error {
public:
  ParseError(const std::string& msg, long line) : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

#undef STCAL_DEFINE_ERROR

}  // namespace stcal
