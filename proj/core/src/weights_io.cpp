#include "bitsearch/weights_io.hpp"

#include "bitsearch/error.hpp"
#include "detail/binary_io.hpp"

#include <fmt/format.h>

namespace bitsearch {

namespace {
constexpr char kMagic[4] = {'Q', 'F', 'W', 'T'};

void write_tensor(detail::BinaryWriter& out, const Tensor& t) {
  out.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) out.f64(v);
}

Tensor read_tensor(detail::BinaryReader& in) {
  const std::uint32_t rank = in.u32();
  if (rank > 8) throw CorruptCheckpointError(fmt::format("implausible tensor rank {}", rank));
  Shape shape(rank);
  for (auto& d : shape) d = in.u32();
  const std::size_t n = shape_size(shape);
  if (n * 8 > in.remaining()) throw CorruptCheckpointError("tensor data runs past the end of the file");
  std::vector<double> data(n);
  for (auto& v : data) v = in.f64();
  return Tensor(std::move(shape), std::move(data));
}
}  // namespace

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path) {
  detail::BinaryWriter out;
  out.bytes(kMagic, 4);
  out.u32(kWeightsFormatVersion);
  out.u32(static_cast<std::uint32_t>(weights.layers.size()));
  for (const auto& layer : weights.layers) {
    write_tensor(out, layer.weight);
    write_tensor(out, layer.bias);
  }
  out.save(path);
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  auto in = detail::BinaryReader::open(path);
  in.expect_magic(kMagic);
  const std::uint32_t version = in.u32();
  if (version != kWeightsFormatVersion) {
    throw CheckpointVersionError(fmt::format("'{}': weights format version {}, expected {}", path.string(), version,
                                             kWeightsFormatVersion));
  }
  const std::uint32_t layers = in.u32();
  NetworkWeights w;
  for (std::uint32_t l = 0; l < layers; ++l) {
    LayerParams p;
    p.weight = read_tensor(in);
    p.bias = read_tensor(in);
    w.layers.push_back(std::move(p));
  }
  in.expect_end();
  return w;
}

}  // namespace bitsearch
