#include "fgt/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace fgt {

namespace {

using json = nlohmann::json;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large bodies.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json header_of(const Network& net) {
  json layers = json::array();
  for (const auto& spec : net.specs()) {
    json l{{"name", spec.name}, {"kind", std::string(to_string(spec.kind))}};
    if (spec.units) l["units"] = spec.units;
    if (spec.kernel) l["kernel"] = spec.kernel;
    if (spec.kind == LayerKind::Dropout) l["rate"] = spec.rate;
    layers.push_back(std::move(l));
  }
  json tensors = json::array();
  for (const auto& layer : net.layers()) {
    std::vector<std::string> names;
    for (auto& p : const_cast<Layer&>(layer).params()) names.push_back(p.name);
    if (std::holds_alternative<BatchNormLayer>(layer.state)) {
      names.push_back(layer.spec.name + ".running_mean");
      names.push_back(layer.spec.name + ".running_var");
    }
    const auto values = layer.persistent_tensors();
    for (std::size_t i = 0; i < values.size(); ++i)
      tensors.push_back({{"name", names[i]}, {"shape", values[i]->shape()}});
  }
  const auto trainable = net.trainable_names();
  return json{{"format", "fgtb"},
              {"input_shape", net.input_shape()},
              {"layers", std::move(layers)},
              {"tensors", std::move(tensors)},
              {"trainable", std::vector<std::string>(trainable.begin(), trainable.end())},
              {"seed", net.seed()}};
}

std::vector<LayerSpec> specs_from_header(const json& header) {
  std::vector<LayerSpec> specs;
  for (const auto& l : header.at("layers")) {
    LayerSpec s;
    s.name = l.at("name").get<std::string>();
    s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
    s.units = l.value("units", Index{0});
    s.kernel = l.value("kernel", Index{0});
    s.rate = l.value("rate", 0.0);
    specs.push_back(std::move(s));
  }
  return specs;
}

struct ParsedCheckpoint {
  json header;
  const std::uint8_t* blobs = nullptr;
  std::size_t blob_bytes = 0;
};

ParsedCheckpoint parse(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kPrefix = 4 + 2;
  if (bytes.size() < kPrefix + 4 + 4) throw IntegrityError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw IntegrityError("checkpoint: bad magic bytes");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kCheckpointVersion)
    throw IntegrityError("checkpoint: unsupported format version " + std::to_string(version) +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::size_t body_end = bytes.size() - 4;
  const std::uint32_t stored = get_u32(bytes.data() + body_end);
  if (crc_of(bytes.data() + kPrefix, body_end - kPrefix) != stored)
    throw IntegrityError("checkpoint: CRC mismatch (file corrupt or truncated)");

  const std::uint32_t header_len = get_u32(bytes.data() + kPrefix);
  const std::size_t header_begin = kPrefix + 4;
  if (header_begin + header_len > body_end) throw IntegrityError("checkpoint: header overruns file");
  ParsedCheckpoint parsed;
  try {
    parsed.header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_begin),
                                bytes.begin() + static_cast<std::ptrdiff_t>(header_begin + header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: unreadable header: ") + e.what());
  }
  parsed.blobs = bytes.data() + header_begin + header_len;
  parsed.blob_bytes = body_end - header_begin - header_len;
  return parsed;
}

void apply(Network& net, const ParsedCheckpoint& ckpt) {
  Index expected = 0;
  for (const auto& layer : net.layers())
    for (const auto* t : layer.persistent_tensors()) expected += t->size();
  if (ckpt.blob_bytes != static_cast<std::size_t>(expected) * 4)
    throw IntegrityError("checkpoint: parameter section has " + std::to_string(ckpt.blob_bytes) +
                         " bytes, architecture needs " + std::to_string(expected * 4));
  const std::uint8_t* p = ckpt.blobs;
  for (auto& layer : net.layers())
    for (Tensor* t : layer.persistent_tensors())
      for (Index i = 0; i < t->size(); ++i, p += 4) {
        const std::uint32_t bits = get_u32(p);
        (*t)[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
  const auto names = ckpt.header.at("trainable").get<std::vector<std::string>>();
  net.set_trainable(std::set<std::string>(names.begin(), names.end()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Network& net) {
  const std::string header = header_of(net).dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& layer : net.layers())
    for (const Tensor* t : layer.persistent_tensors())
      for (const double v : t->values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  put_u32(out, crc_of(out.data() + 6, out.size() - 6));
  return out;
}

Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const auto ckpt = parse(bytes);
  try {
    Network net(specs_from_header(ckpt.header), ckpt.header.at("input_shape").get<Shape>(),
                ckpt.header.at("seed").get<std::uint64_t>());
    apply(net, ckpt);
    return net;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write on checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

void load_checkpoint_into(Network& net, const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto ckpt = parse(bytes);
  try {
    if (specs_from_header(ckpt.header) != net.specs() ||
        ckpt.header.at("input_shape").get<Shape>() != net.input_shape())
      throw IntegrityError("checkpoint " + path.string() + ": architecture mismatch");
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: malformed header: ") + e.what());
  }
  apply(net, ckpt);
}

}  // namespace fgt
