#pragma once

#include <stdexcept>
#include <string>

namespace echoroom {

// Base class for all geometric / numeric contract violations.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotCoplanar : Error {
  using Error::Error;
};
struct DegeneratePolygon : Error {
  using Error::Error;
};
struct NonConvex : Error {
  using Error::Error;
};
struct AllZeroInput : Error {
  using Error::Error;
};
struct NegativeEigenvalue : Error {
  using Error::Error;
};
struct SingularKnownMatrix : Error {
  using Error::Error;
};
struct MissingLoudspeaker : Error {
  using Error::Error;
};
struct DegenerateSource : Error {
  using Error::Error;
};
struct NegativeDelay : Error {
  using Error::Error;
};
struct CoplanarMicrophones : Error {
  using Error::Error;
};
struct SourceOnWall : Error {
  using Error::Error;
};
struct MicOnMirrorPlane : Error {
  using Error::Error;
};
// Malformed or missing fields in an input file; the message carries the
// offending field path, e.g. "walls[2].vertices[0]".
struct SchemaError : Error {
  using Error::Error;
};

}  // namespace echoroom
