#include "fhvae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fhvae/binary_io.hpp"

namespace fhvae {

namespace {

constexpr char kMagic[4] = {'F', 'H', 'V', 'D'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_container(const std::string& path, const ModelConfig& config,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  io::put_u32(os, kVersion);
  io::put_u32(os, static_cast<std::uint32_t>(config.feat_dim));
  io::put_u32(os, static_cast<std::uint32_t>(config.seg_len));
  io::put_u32(os, static_cast<std::uint32_t>(config.dim_z1));
  io::put_u32(os, static_cast<std::uint32_t>(config.dim_z2));
  io::put_u32(os, static_cast<std::uint32_t>(config.hidden_dim));
  io::put_u32(os, static_cast<std::uint32_t>(config.num_layers));
  io::put_f64(os, config.var_mu2);
  io::put_f64(os, config.var_z1);
  io::put_f64(os, config.var_z2);
  io::put_f64(os, config.alpha);
  for (const NamedTensor& nt : tensors) {
    io::put_u32(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    io::put_u32(os, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (std::size_t e : nt.tensor.shape) io::put_u64(os, e);
    io::put_f64_array(os, nt.tensor.data.data(), nt.tensor.numel());
  }
  if (!os) throw IoError("checkpoint: short write to " + path);
}

Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: " + path + " is not a model container");
  }
  std::uint32_t version = io::get_u32(is);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version) +
                  " in " + path);
  }
  Container c;
  c.config.feat_dim = io::get_u32(is);
  c.config.seg_len = io::get_u32(is);
  c.config.dim_z1 = io::get_u32(is);
  c.config.dim_z2 = io::get_u32(is);
  c.config.hidden_dim = io::get_u32(is);
  c.config.num_layers = io::get_u32(is);
  c.config.var_mu2 = io::get_f64(is);
  c.config.var_z1 = io::get_f64(is);
  c.config.var_z2 = io::get_f64(is);
  c.config.alpha = io::get_f64(is);

  while (is.peek() != std::char_traits<char>::eof()) {
    std::uint32_t name_len = io::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated tensor name in " + path);
    std::uint32_t rank = io::get_u32(is);
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(io::get_u64(is));
    }
    Tensor t(shape);
    io::get_f64_array(is, t.data.data(), t.numel());
    c.tensors.push_back(NamedTensor{std::move(name), std::move(t)});
  }
  return c;
}

}  // namespace fhvae
