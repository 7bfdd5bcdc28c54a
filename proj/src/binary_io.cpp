#include "sldc/binary_io.hpp"

#include <fstream>
#include <iterator>

#include <fmt/core.h>

namespace sldc::io {

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() ||
      std::string_view(bytes_.data() + pos_, tag.size()) != tag) {
    throw Error(ErrorKind::Format,
                fmt::format("{}: bad magic, expected \"{}\"", origin_, tag));
  }
  pos_ += tag.size();
}

std::string ByteReader::get_string(std::size_t length) {
  require(length);
  std::string out(bytes_.data() + pos_, length);
  pos_ += length;
  return out;
}

void ByteReader::skip_to_alignment(std::size_t alignment) {
  std::size_t target = (pos_ + alignment - 1) / alignment * alignment;
  require(target - pos_);
  pos_ = target;
}

void ByteReader::require(std::size_t count) const {
  if (remaining() < count) {
    throw Error(ErrorKind::Corruption,
                fmt::format("{}: truncated, expected {} bytes but file has {}", origin_,
                            pos_ + count, bytes_.size()));
  }
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("{}: cannot open for reading", path.string()));
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("{}: cannot open for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, fmt::format("{}: write failed", path.string()));
}

std::string peek_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("{}: cannot open for reading", path.string()));
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() < 4) return {};
  return std::string(buf, 4);
}

}  // namespace sldc::io
