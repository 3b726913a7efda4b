#include "gait/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gait/error.hpp"

namespace gait {

namespace {

constexpr std::string_view kMagic = "GPL1";
constexpr std::string_view kCheckpointFormat = "gaitnet-checkpoint";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

bool valid_name(std::string_view name) {
  if (name.empty() || name.front() == '@') return false;
  for (char c : name) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return false;
  }
  return true;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename N>
N parse_number(std::string_view text, std::string_view what, std::string_view source) {
  N value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}: bad {} '{}'", source, what, text));
  }
  return value;
}

}  // namespace

const std::string* TensorContainer::find_meta(std::string_view key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& TensorContainer::meta_value(std::string_view key) const {
  if (const auto* v = find_meta(key)) return *v;
  throw DataError(fmt::format("container is missing metadata '@{}'", key));
}

std::string encode_container(const TensorContainer& container) {
  std::string header;
  for (const auto& [key, value] : container.meta) {
    if (!valid_name(key) || value.find('\n') != std::string::npos) {
      throw std::invalid_argument("invalid container metadata key '" + key + "'");
    }
    header += fmt::format("@{} {}\n", key, value);
  }
  for (const auto& [name, tensor] : container.tensors) {
    if (!valid_name(name)) throw std::invalid_argument("invalid tensor name '" + name + "'");
    header += name;
    for (auto d : tensor.shape()) header += fmt::format(" {}", d);
    header += '\n';
  }
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& entry : container.tensors) {
    for (float v : entry.second.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorContainer decode_container(std::string_view bytes, std::string_view source) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw DataError(fmt::format("{}: not a GPL1 container (bad magic)", source));
  }
  const std::size_t header_len = get_u32(bytes, kMagic.size());
  const std::size_t header_begin = kMagic.size() + 4;
  if (header_len > bytes.size() - header_begin) {
    throw DataError(fmt::format("{}: truncated header ({} bytes declared, {} available)", source,
                                header_len, bytes.size() - header_begin));
  }
  const std::string_view header = bytes.substr(header_begin, header_len);

  TensorContainer c;
  std::vector<Shape> shapes;
  std::size_t pos = 0;
  while (pos < header.size()) {
    std::size_t nl = header.find('\n', pos);
    if (nl == std::string_view::npos) {
      throw DataError(fmt::format("{}: header line not newline-terminated", source));
    }
    const std::string_view line = header.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    if (line.front() == '@') {
      const std::size_t sp = line.find(' ');
      const auto key = line.substr(1, sp == std::string_view::npos ? line.npos : sp - 1);
      const auto value = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
      c.meta.emplace_back(std::string(key), std::string(value));
      continue;
    }
    auto fields = split_ws(line);
    if (fields.size() < 2) {
      throw DataError(fmt::format("{}: corrupt shape table line '{}'", source, line));
    }
    Shape shape;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto d = parse_number<std::size_t>(fields[i], "tensor extent", source);
      if (d == 0) throw DataError(fmt::format("{}: zero extent in '{}'", source, line));
      shape.push_back(d);
    }
    c.tensors.emplace_back(std::string(fields[0]), Tensor{});
    shapes.push_back(std::move(shape));
  }

  std::size_t offset = header_begin + header_len;
  for (std::size_t t = 0; t < shapes.size(); ++t) {
    const std::size_t n = shape_size(shapes[t]);
    if (n > (bytes.size() - offset) / 4) {
      throw DataError(fmt::format("{}: truncated data for tensor '{}'", source,
                                  c.tensors[t].first));
    }
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
    offset += 4 * n;
    c.tensors[t].second = Tensor(shapes[t], std::move(values));
  }
  if (offset != bytes.size()) {
    throw DataError(fmt::format("{}: {} trailing bytes after last tensor", source,
                                bytes.size() - offset));
  }
  return c;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
  write_file_bytes(path, encode_container(container));
}

TensorContainer read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path), path.string());
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::string encode_checkpoint(const ModelParams& params) {
  const NetConfig& cfg = params.config;
  TensorContainer c;
  c.meta = {{"format", std::string(kCheckpointFormat)},
            {"pool", std::string(to_string(cfg.pooling))},
            {"lrn", fmt::format("{} {} {} {}", cfg.lrn.radius, cfg.lrn.k, cfg.lrn.alpha,
                                cfg.lrn.beta)},
            {"input", fmt::format("{}", cfg.input_size)},
            {"iteration", fmt::format("{}", params.iteration)}};
  const auto w = params.weights.tensors();
  const auto v = params.velocity.tensors();
  for (std::size_t i = 0; i < ParamSet<float>::kCount; ++i) {
    c.tensors.emplace_back(std::string(ParamSet<float>::kNames[i]), *w[i]);
  }
  for (std::size_t i = 0; i < ParamSet<float>::kCount; ++i) {
    c.tensors.emplace_back(std::string(ParamSet<float>::kNames[i]) + ".velocity", *v[i]);
  }
  return encode_container(c);
}

ModelParams decode_checkpoint(std::string_view bytes, std::string_view source) {
  const TensorContainer c = decode_container(bytes, source);
  const auto* fmt_name = c.find_meta("format");
  if (!fmt_name || *fmt_name != kCheckpointFormat) {
    throw DataError(fmt::format("{}: not a checkpoint (format '{}')", source,
                                fmt_name ? *fmt_name : std::string("<missing>")));
  }
  auto find = [&](std::string_view name) -> const Tensor* {
    for (const auto& [n, t] : c.tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  };
  auto require = [&](std::string_view name) -> const Tensor& {
    if (const auto* t = find(name)) return *t;
    throw DataError(fmt::format("{}: checkpoint is missing tensor '{}'", source, name));
  };

  NetConfig cfg;
  try {
    cfg.pooling = parse_pooling_mode(c.meta_value("pool"));
  } catch (const std::invalid_argument& e) {
    throw DataError(fmt::format("{}: {}", source, e.what()));
  }
  const auto lrn = split_ws(c.meta_value("lrn"));
  if (lrn.size() != 4) throw DataError(fmt::format("{}: bad @lrn line", source));
  cfg.lrn.radius = parse_number<int>(lrn[0], "lrn radius", source);
  cfg.lrn.k = parse_number<double>(lrn[1], "lrn k", source);
  cfg.lrn.alpha = parse_number<double>(lrn[2], "lrn alpha", source);
  cfg.lrn.beta = parse_number<double>(lrn[3], "lrn beta", source);
  cfg.input_size = parse_number<std::size_t>(c.meta_value("input"), "input size", source);

  const Tensor& c1 = require("conv1.weight");
  const Tensor& c2 = require("conv2.weight");
  const Tensor& mc = require("mcnn.weight");
  if (c1.rank() != 4 || c2.rank() != 4 || mc.rank() != 4) {
    throw DataError(fmt::format("{}: convolution weights must be rank 4", source));
  }
  cfg.conv1 = {c1.dim(0), c1.dim(2)};
  cfg.conv2 = {c2.dim(0), c2.dim(2)};
  cfg.mcnn = {mc.dim(0), mc.dim(2)};

  ModelParams params;
  params.config = cfg;
  try {
    params.weights = ParamSet<float>::zeros(cfg);
  } catch (const ShapeError& e) {
    throw DataError(fmt::format("{}: inconsistent shape table: {}", source, e.what()));
  }
  params.velocity = params.weights;
  auto w = params.weights.tensors();
  auto v = params.velocity.tensors();
  for (std::size_t i = 0; i < ParamSet<float>::kCount; ++i) {
    const std::string name(ParamSet<float>::kNames[i]);
    const Tensor& t = require(name);
    if (t.shape() != w[i]->shape()) {
      throw DataError(fmt::format("{}: tensor '{}' has shape {}, expected {}", source, name,
                                  to_string(t.shape()), to_string(w[i]->shape())));
    }
    *w[i] = t;
    if (const auto* vel = find(name + ".velocity")) {
      if (vel->shape() != t.shape()) {
        throw DataError(fmt::format("{}: velocity for '{}' has wrong shape", source, name));
      }
      *v[i] = *vel;
    } else {
      v[i]->fill(0.0f);
    }
  }
  if (const auto* it = c.find_meta("iteration")) {
    params.iteration = parse_number<std::uint64_t>(*it, "iteration", source);
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

std::string params_hash(const ModelParams& params) {
  return content_hash(encode_checkpoint(params));
}

}  // namespace gait
