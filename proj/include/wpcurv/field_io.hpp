#pragma once

#include <string>
#include <variant>

#include "wpcurv/fields.hpp"

namespace wpcurv {

using AnyField = std::variant<ScalarField, VectorField, SymMatrixField>;

/// Shared field file format: a small text header (dim, shape, extent,
/// topology, kind, "#end") followed by raw little-endian 64-bit floats,
/// row-major with components innermost. Round-trips bit-exactly.
void write_field(const std::string& path, const ScalarField& f);
void write_field(const std::string& path, const VectorField& f);
void write_field(const std::string& path, const SymMatrixField& f);

AnyField read_field(const std::string& path);
ScalarField read_scalar_field(const std::string& path);
SymMatrixField read_symmat_field(const std::string& path);

/// Writes `contents` to `path` via a temp file in the same directory and an
/// atomic rename.
void atomic_write_text(const std::string& path, const std::string& contents);

}  // namespace wpcurv
