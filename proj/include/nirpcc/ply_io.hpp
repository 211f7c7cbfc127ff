#pragma once

#include <string>

#include "nirpcc/pointset.hpp"

namespace nirpcc {

enum class PlyErrorKind {
  MalformedHeader,
  UnsupportedProperty,
  TruncatedPayload,
  InvalidValue,
  IoFailure,
};

class PlyError : public DataError {
 public:
  PlyError(PlyErrorKind kind, const std::string& message)
      : DataError(message), kind_(kind) {}
  PlyErrorKind kind() const { return kind_; }

 private:
  PlyErrorKind kind_;
};

enum class PlyFormat { BinaryLittleEndian, Ascii };

/// Reads an ASCII or binary-little-endian PLY file. Positions come from the
/// x/y/z vertex properties (any numeric scalar type); colors are populated
/// iff all of red/green/blue are present as uchar.
PointCloud read_ply(const std::string& path);

/// Writes x/y/z as float32 plus uchar red/green/blue when colors are present.
void write_ply(const PointCloud& cloud, const std::string& path,
               PlyFormat format = PlyFormat::BinaryLittleEndian);

}  // namespace nirpcc
