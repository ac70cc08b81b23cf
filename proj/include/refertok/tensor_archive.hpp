#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "refertok/errors.hpp"

namespace refertok {

// Flat binary container for embeddings and weights.
//
// Layout:
//   bytes 0..3   magic "RTK1"
//   one JSON header line terminated by '\n':
//     {"fields":[{"name":...,"shape":[...],"dtype":"f32","offset":N}, ...]}
//   zero padding up to the payload base (the first 64-byte file offset at or
//   after the header newline), then the payloads.
//
// Offsets are relative to the payload base and are multiples of 64, so every
// payload is 64-byte aligned in the file. Elements are little-endian IEEE-754
// 32-bit floats, written in field order.
class TensorArchive {
 public:
  struct Field {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t element_count() const {
      std::size_t n = 1;
      for (std::size_t s : shape) n *= s;
      return n;
    }
  };

  void add(const std::string& name, std::vector<std::size_t> shape,
           const std::vector<double>& values) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    if (n != values.size())
      raise(ErrorKind::DimMismatch, "archive field '" + name + "': shape/" +
                                        std::to_string(values.size()) +
                                        " values mismatch");
    Field f;
    f.name = name;
    f.shape = std::move(shape);
    f.data.reserve(values.size());
    for (double v : values) f.data.push_back(static_cast<float>(v));
    fields_.push_back(std::move(f));
  }

  bool has(const std::string& name) const {
    for (const auto& f : fields_)
      if (f.name == name) return true;
    return false;
  }

  const Field& field(const std::string& name) const {
    for (const auto& f : fields_)
      if (f.name == name) return f;
    raise(ErrorKind::FormatError, "archive is missing field '" + name + "'");
  }

  std::vector<double> field_values(const std::string& name) const {
    const Field& f = field(name);
    std::vector<double> out(f.data.begin(), f.data.end());
    return out;
  }

  const std::vector<Field>& fields() const { return fields_; }

  void save(const std::string& path) const {
    nlohmann::json header;
    header["fields"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& f : fields_) {
      nlohmann::json jf;
      jf["name"] = f.name;
      jf["shape"] = f.shape;
      jf["dtype"] = "f32";
      jf["offset"] = offset;
      header["fields"].push_back(jf);
      offset = align64(offset + f.data.size() * 4);
    }
    const std::string header_line = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::IoError, "cannot open '" + path + "' for writing");
    out.write("RTK1", 4);
    out.write(header_line.data(),
              static_cast<std::streamsize>(header_line.size()));
    out.put('\n');
    const std::size_t prefix = 4 + header_line.size() + 1;
    write_zeros(out, align64(prefix) - prefix);

    std::size_t cursor = 0;
    for (const auto& f : fields_) {
      for (float v : f.data) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        const unsigned char b[4] = {
            static_cast<unsigned char>(u & 0xff),
            static_cast<unsigned char>((u >> 8) & 0xff),
            static_cast<unsigned char>((u >> 16) & 0xff),
            static_cast<unsigned char>((u >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
      }
      cursor += f.data.size() * 4;
      write_zeros(out, align64(cursor) - cursor);
      cursor = align64(cursor);
    }
    if (!out) raise(ErrorKind::IoError, "write to '" + path + "' failed");
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::IoError, "cannot open '" + path + "'");
    std::string raw((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    return parse(raw, path);
  }

  static TensorArchive parse(const std::string& raw, const std::string& origin) {
    if (raw.size() < 5 || raw.compare(0, 4, "RTK1") != 0)
      raise(ErrorKind::FormatError, "'" + origin + "': bad magic");
    const std::size_t nl = raw.find('\n', 4);
    if (nl == std::string::npos)
      raise(ErrorKind::FormatError, "'" + origin + "': unterminated header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(raw.substr(4, nl - 4));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::FormatError, "'" + origin + "': header: " + e.what());
    }
    const std::size_t base = align64(nl + 1);

    TensorArchive archive;
    if (!header.contains("fields") || !header["fields"].is_array())
      raise(ErrorKind::FormatError, "'" + origin + "': header has no fields");
    for (const auto& jf : header["fields"]) {
      Field f;
      std::size_t offset = 0;
      try {
        f.name = jf.at("name").get<std::string>();
        if (jf.at("dtype").get<std::string>() != "f32")
          raise(ErrorKind::FormatError,
                "'" + origin + "': field '" + f.name + "' is not f32");
        f.shape = jf.at("shape").get<std::vector<std::size_t>>();
        offset = jf.at("offset").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::FormatError,
              "'" + origin + "': field entry: " + e.what());
      }
      const std::size_t count = f.element_count();
      const std::size_t start = base + offset;
      if (start + count * 4 > raw.size())
        raise(ErrorKind::FormatError,
              "'" + origin + "': field '" + f.name + "' is truncated");
      f.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto* b =
            reinterpret_cast<const unsigned char*>(raw.data() + start + i * 4);
        const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                                (static_cast<std::uint32_t>(b[1]) << 8) |
                                (static_cast<std::uint32_t>(b[2]) << 16) |
                                (static_cast<std::uint32_t>(b[3]) << 24);
        float v;
        std::memcpy(&v, &u, 4);
        if (!std::isfinite(v))
          raise(ErrorKind::FormatError,
                "'" + origin + "': field '" + f.name + "' has non-finite values");
        f.data[i] = v;
      }
      archive.fields_.push_back(std::move(f));
    }
    return archive;
  }

 private:
  static std::size_t align64(std::size_t n) { return (n + 63) / 64 * 64; }

  static void write_zeros(std::ofstream& out, std::size_t count) {
    static const char zeros[64] = {0};
    while (count > 0) {
      const std::size_t chunk = count < 64 ? count : 64;
      out.write(zeros, static_cast<std::streamsize>(chunk));
      count -= chunk;
    }
  }

  std::vector<Field> fields_;
};

}  // namespace refertok
