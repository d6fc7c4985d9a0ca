#pragma once

// Little-endian framing shared by the TVOL1 and TVNET1 file formats:
//   <magic bytes> '\n' <canonical JSON header> '\n' <payload>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tversky/error.hpp"

namespace tversky::binary_io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::string header_block(const std::string& magic, const nlohmann::json& header) {
  // nlohmann::json objects are key-sorted, and dump() without indent emits no
  // newlines, so this is a canonical single-line encoding.
  return magic + "\n" + header.dump() + "\n";
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("failed reading " + path);
  return bytes;
}

/// Cursor over a loaded file. Running past the end raises a truncation error.
class Reader {
 public:
  Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  /// Checks the magic line and returns the parsed JSON header.
  nlohmann::json header(const std::string& magic) {
    const std::string expected = magic + "\n";
    if (bytes_.compare(0, expected.size(), expected) != 0) {
      throw FormatError(FormatError::Kind::bad_magic,
                        path_ + ": bad magic, expected '" + magic + "'");
    }
    pos_ = expected.size();
    const auto eol = bytes_.find('\n', pos_);
    if (eol == std::string::npos) {
      throw FormatError(FormatError::Kind::truncated, path_ + ": truncated JSON header");
    }
    try {
      auto j = nlohmann::json::parse(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     bytes_.begin() + static_cast<std::ptrdiff_t>(eol));
      pos_ = eol + 1;
      return j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::bad_header, path_ + ": malformed JSON header: " + e.what());
    }
  }

  template <typename T>
  std::vector<T> array(std::size_t count, const char* what) {
    const std::size_t need = count * sizeof(T);
    if (bytes_.size() - pos_ < need) {
      throw FormatError(FormatError::Kind::truncated,
                        path_ + ": truncated " + what + " payload (need " + std::to_string(need) +
                            " bytes, have " + std::to_string(bytes_.size() - pos_) + ")");
    }
    std::vector<T> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = get_le<T>(bytes_.data() + pos_ + i * sizeof(T));
    pos_ += need;
    return out;
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw FormatError(FormatError::Kind::shape_mismatch,
                        path_ + ": " + std::to_string(bytes_.size() - pos_) +
                            " trailing bytes after payload");
    }
  }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace tversky::binary_io
