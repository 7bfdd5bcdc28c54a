#include "sldc/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/error.hpp"
#include "sldc/kernels.hpp"
#include "sldc/log.hpp"

namespace sldc {

FeatureMatrix::FeatureMatrix(Matrix values, std::vector<std::int32_t> labels,
                             std::uint32_t task_id, std::string model_tag)
    : values_(std::move(values)),
      labels_(std::move(labels)),
      task_id_(task_id),
      model_tag_(std::move(model_tag)) {
  if (static_cast<Eigen::Index>(labels_.size()) != values_.rows()) {
    throw Error(ErrorKind::Shape, fmt::format("feature matrix has {} rows but {} labels",
                                              values_.rows(), labels_.size()));
  }
  if (values_.cols() <= 0) throw Error(ErrorKind::Shape, "feature dimension must be positive");
  if (!values_.allFinite()) throw Error(ErrorKind::Corruption, "feature values must be finite");
  if (std::any_of(labels_.begin(), labels_.end(), [](std::int32_t l) { return l < 0; }))
    throw Error(ErrorKind::Corruption, "labels must be non-negative");
  if (model_tag_.size() > kMaxModelTag)
    throw Error(ErrorKind::Config, fmt::format("model tag longer than {} bytes", kMaxModelTag));
}

FeatureMatrix FeatureMatrix::empty(Eigen::Index dim, std::uint32_t task_id,
                                   std::string model_tag) {
  return FeatureMatrix(Matrix(0, dim), {}, task_id, std::move(model_tag));
}

Matrix FeatureMatrix::rows_with_label(std::int32_t label) const {
  const auto count = std::count(labels_.begin(), labels_.end(), label);
  Matrix out(count, dim());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (labels_[static_cast<std::size_t>(i)] == label) out.row(r++) = values_.row(i);
  return out;
}

std::vector<std::int32_t> FeatureMatrix::distinct_labels() const {
  std::vector<std::int32_t> out;
  std::unordered_set<std::int32_t> seen;
  for (auto l : labels_)
    if (seen.insert(l).second) out.push_back(l);
  return out;
}

bool FeatureMatrix::operator==(const FeatureMatrix& other) const {
  return task_id_ == other.task_id_ && model_tag_ == other.model_tag_ &&
         labels_ == other.labels_ && values_.rows() == other.values_.rows() &&
         values_.cols() == other.values_.cols() && values_ == other.values_;
}

FeatureMatrix concat_rows(const FeatureMatrix& top, const FeatureMatrix& bottom) {
  if (top.dim() != bottom.dim()) {
    throw Error(ErrorKind::Shape,
                fmt::format("cannot stack d={} over d={}", top.dim(), bottom.dim()));
  }
  Matrix values(top.size() + bottom.size(), top.dim());
  values << top.values(), bottom.values();
  std::vector<std::int32_t> labels = top.labels();
  labels.insert(labels.end(), bottom.labels().begin(), bottom.labels().end());
  return FeatureMatrix(std::move(values), std::move(labels), top.task_id(), top.model_tag());
}

FeatureMatrix l2_normalize(const FeatureMatrix& m) {
  Matrix values = m.values();
  const auto zero_rows = kernels::normalize_rows(values);
  if (zero_rows > 0) log::warn(fmt::format("l2_normalize: {} zero-norm rows left as zero", zero_rows));
  return FeatureMatrix(std::move(values), m.labels(), m.task_id(), m.model_tag());
}

void write_dump(const FeatureMatrix& m, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("FTDK");
  w.put<std::uint16_t>(kFtdVersion);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.dim()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.size()));
  w.put<std::uint32_t>(m.task_id());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.model_tag().size()));
  w.raw(m.model_tag());
  w.pad_to(8);
  for (auto l : m.labels()) w.put<std::int32_t>(l);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    for (Eigen::Index c = 0; c < m.dim(); ++c) w.put<float>(static_cast<float>(m.values()(i, c)));
  io::write_file(path, w.bytes());
}

namespace {

DumpHeader parse_header(io::ByteReader& r) {
  r.expect_magic("FTDK");
  DumpHeader h;
  h.version = r.get<std::uint16_t>();
  if (h.version != kFtdVersion) {
    throw Error(ErrorKind::Format,
                fmt::format("{}: unsupported FTD version {}", r.origin(), h.version));
  }
  r.get<std::uint16_t>();  // reserved
  h.dim = r.get<std::uint32_t>();
  h.count = r.get<std::uint64_t>();
  h.task_id = r.get<std::uint32_t>();
  const auto tag_len = r.get<std::uint8_t>();
  if (tag_len > kMaxModelTag)
    throw Error(ErrorKind::Format, fmt::format("{}: model tag length {}", r.origin(), tag_len));
  h.model_tag = r.get_string(tag_len);
  r.skip_to_alignment(8);
  h.payload_offset = r.position();
  if (h.dim == 0) throw Error(ErrorKind::Format, fmt::format("{}: zero dimension", r.origin()));
  return h;
}

}  // namespace

DumpHeader read_dump_header(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  return parse_header(r);
}

FeatureMatrix load_dump(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  const DumpHeader h = parse_header(r);
  const std::uint64_t payload = h.count * 4 + h.count * h.dim * 4;
  r.require(payload);

  std::vector<std::int32_t> labels(h.count);
  for (auto& l : labels) {
    l = r.get<std::int32_t>();
    if (l < 0) throw Error(ErrorKind::Corruption, fmt::format("{}: negative label {}", path.string(), l));
  }
  Matrix values(static_cast<Eigen::Index>(h.count), static_cast<Eigen::Index>(h.dim));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const float v = r.get<float>();
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::Corruption,
                    fmt::format("{}: non-finite value at row {} column {}", path.string(), i, c));
      }
      values(i, c) = static_cast<double>(v);
    }
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::Corruption,
                fmt::format("{}: {} trailing bytes after payload", path.string(), r.remaining()));
  }
  return FeatureMatrix(std::move(values), std::move(labels), h.task_id, h.model_tag);
}

}  // namespace sldc
