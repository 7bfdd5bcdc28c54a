#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sldc/types.hpp"

namespace sldc {

/// A batch of deep features: one row per sample, with an integer class label
/// per row. Immutable once constructed; the constructor enforces finiteness
/// and non-negative labels.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(Matrix values, std::vector<std::int32_t> labels, std::uint32_t task_id = 0,
                std::string model_tag = {});

  // Empty matrix with a known dimension.
  static FeatureMatrix empty(Eigen::Index dim, std::uint32_t task_id = 0,
                             std::string model_tag = {});

  Eigen::Index dim() const { return values_.cols(); }
  Eigen::Index size() const { return values_.rows(); }
  const Matrix& values() const { return values_; }
  const std::vector<std::int32_t>& labels() const { return labels_; }
  std::uint32_t task_id() const { return task_id_; }
  const std::string& model_tag() const { return model_tag_; }

  // Rows whose label equals `label`, in original order.
  Matrix rows_with_label(std::int32_t label) const;

  // Distinct labels in order of first appearance.
  std::vector<std::int32_t> distinct_labels() const;

  bool operator==(const FeatureMatrix& other) const;

 private:
  Matrix values_;
  std::vector<std::int32_t> labels_;
  std::uint32_t task_id_ = 0;
  std::string model_tag_;
};

// Row-wise concatenation; metadata taken from `top`.
FeatureMatrix concat_rows(const FeatureMatrix& top, const FeatureMatrix& bottom);

// Scales every nonzero row to unit Euclidean norm; zero rows pass through
// unchanged with a warning.
FeatureMatrix l2_normalize(const FeatureMatrix& m);

// FTD dump: "FTDK" | u16 version=1 | u16 reserved=0 | u32 d | u64 n | u32 task_id |
// u8 tag length + tag bytes (<= 64) | zero padding to 8-byte alignment |
// i32 labels x n | f32 values x n*d (row-major). Little-endian throughout.
// Values are narrowed to f32 on write.
inline constexpr std::uint16_t kFtdVersion = 1;
inline constexpr std::size_t kMaxModelTag = 64;

void write_dump(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix load_dump(const std::filesystem::path& path);

struct DumpHeader {
  std::uint16_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint32_t task_id = 0;
  std::string model_tag;
  std::uint64_t payload_offset = 0;
};

DumpHeader read_dump_header(const std::filesystem::path& path);

}  // namespace sldc
