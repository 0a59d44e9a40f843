#pragma once

#include <filesystem>

#include "supmeter/matrix.hpp"
#include "supmeter/supmetric.hpp"

namespace supmeter::io {

// On-disk activation dumps. Every format stores one sample per row; the
// loaders return features x samples, the layout the metric expects.
//   .csv  numeric rows, optional non-numeric header line
//   .bin  u64 rows, u64 cols, then rows*cols f64 row-major (little endian)
//   .t4   u64 B, C, H, W, then B*C*H*W f64 in NCHW order

Matrix read_activations_csv(const std::filesystem::path& path);
Matrix read_activations_bin(const std::filesystem::path& path);
metric::Tensor4 read_tensor4(const std::filesystem::path& path);

void write_activations_bin(const std::filesystem::path& path, const Matrix& features_by_samples);
void write_tensor4(const std::filesystem::path& path, const metric::Tensor4& t);

/// Picks the reader from the extension; .t4 is flattened to channels x positions.
Matrix read_activations(const std::filesystem::path& path);

}  // namespace supmeter::io
