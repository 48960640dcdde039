#include "dan/kernels.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dan {

namespace {

void check_odd(int size) {
  if (size < 1 || size % 2 == 0)
    throw std::invalid_argument("kernel size must be a positive odd integer");
}

BlurKernel normalized(Arr2X raw) {
  const double s = raw.sum();
  if (!(s > 0.0)) throw std::runtime_error("kernel normalization: non-positive mass");
  return BlurKernel{raw / s};
}

void write_u16(std::ostream& os, std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); }
void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
std::uint16_t read_u16(std::istream& is) { std::uint16_t v; is.read(reinterpret_cast<char*>(&v), 2); return v; }
std::uint32_t read_u32(std::istream& is) { std::uint32_t v; is.read(reinterpret_cast<char*>(&v), 4); return v; }

void write_f32(std::ostream& os, const VecX& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f = static_cast<float>(v[i]);
    os.write(reinterpret_cast<char*>(&f), 4);
  }
}

VecX read_f32(std::istream& is, Eigen::Index n) {
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    float f;
    is.read(reinterpret_cast<char*>(&f), 4);
    v[i] = f;
  }
  return v;
}

}  // namespace

VecX BlurKernel::flatten() const {
  const int n = size();
  VecX v(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v[i * n + j] = data(i, j);
  return v;
}

BlurKernel BlurKernel::from_flat(const VecX& v) {
  const int n = static_cast<int>(std::lround(std::sqrt(double(v.size()))));
  if (Eigen::Index(n) * n != v.size())
    throw std::invalid_argument("from_flat: length is not a perfect square");
  BlurKernel k{Arr2X(n, n)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k.data(i, j) = v[i * n + j];
  return k;
}

BlurKernel dirac_kernel(int size) {
  check_odd(size);
  Arr2X d = Arr2X::Zero(size, size);
  d((size - 1) / 2, (size - 1) / 2) = 1.0;
  return BlurKernel{d};
}

BlurKernel isotropic_gaussian(int size, double sigma) {
  check_odd(size);
  if (!(sigma > 0.0)) throw std::invalid_argument("isotropic_gaussian: sigma must be > 0");
  const double c = (size - 1) / 2.0;
  Arr2X raw(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      raw(i, j) = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * sigma * sigma));
  return normalized(raw);
}

BlurKernel anisotropic_gaussian(int size, double ax1, double ax2, double theta,
                                double mult_noise_max, std::uint64_t seed) {
  check_odd(size);
  if (!(ax1 > 0.0) || !(ax2 > 0.0))
    throw std::invalid_argument("anisotropic_gaussian: axes must be > 0");
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  Eigen::Matrix2d cov = rot * Eigen::Vector2d(ax1 * ax1, ax2 * ax2).asDiagonal() * rot.transpose();
  Eigen::Matrix2d prec = cov.inverse();

  const double c = (size - 1) / 2.0;
  Arr2X raw(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      Eigen::Vector2d d(i - c, j - c);
      raw(i, j) = std::exp(-0.5 * d.dot(prec * d));
    }

  if (mult_noise_max > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0 - mult_noise_max, 1.0);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) raw(i, j) *= u(rng);
  }
  return normalized(raw);
}

std::vector<BlurKernel> gaussian8(int scale) {
  double lo, hi;
  switch (scale) {
    case 2: lo = 0.80; hi = 1.60; break;
    case 3: lo = 1.35; hi = 2.40; break;
    case 4: lo = 1.80; hi = 3.20; break;
    default: throw std::invalid_argument("gaussian8: scale must be 2, 3 or 4");
  }
  std::vector<BlurKernel> ks;
  ks.reserve(8);
  for (int i = 0; i < 8; ++i)
    ks.push_back(isotropic_gaussian(21, lo + (hi - lo) * i / 7.0));
  return ks;
}

BlurKernel sample_kernel(const KernelFamilySpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (spec.family == KernelFamily::Isotropic) {
    std::uniform_real_distribution<double> u(spec.sigma_min, spec.sigma_max);
    return isotropic_gaussian(spec.size, u(rng));
  }
  std::uniform_real_distribution<double> ax(spec.axis_min, spec.axis_max);
  std::uniform_real_distribution<double> th(spec.rotation_min, spec.rotation_max);
  const double a1 = ax(rng), a2 = ax(rng), theta = th(rng);
  return anisotropic_gaussian(spec.size, a1, a2, theta, spec.mult_noise_max, rng());
}

PcaBasis pca_fit(const std::vector<BlurKernel>& samples, int d) {
  if (static_cast<int>(samples.size()) < d)
    throw std::invalid_argument("pca_fit: need at least d samples");
  const int size = samples[0].size();
  const int n = size * size;
  for (const auto& k : samples)
    if (k.size() != size) throw std::invalid_argument("pca_fit: mixed kernel sizes");

  VecX mean = VecX::Zero(n);
  for (const auto& k : samples) mean += k.flatten();
  mean /= double(samples.size());

  MatX cov = MatX::Zero(n, n);
  for (const auto& k : samples) {
    VecX c = k.flatten() - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= double(samples.size() - 1 > 0 ? samples.size() - 1 : 1);

  Eigen::SelfAdjointEigenSolver<MatX> es(cov);
  MatX comp(d, n);
  for (int i = 0; i < d; ++i) {
    VecX v = es.eigenvectors().col(n - 1 - i);  // descending eigenvalue order
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0) v = -v;  // deterministic sign
    comp.row(i) = v.transpose();
  }
  return PcaBasis{mean, comp, size};
}

ReducedKernel pca_reduce(const BlurKernel& kernel, const PcaBasis& basis) {
  if (kernel.size() != basis.kernel_size)
    throw std::invalid_argument("pca_reduce: kernel size does not match basis");
  return ReducedKernel{basis.components * (kernel.flatten() - basis.mean)};
}

BlurKernel pca_expand(const ReducedKernel& reduced, const PcaBasis& basis) {
  if (reduced.dim() != basis.dim())
    throw std::invalid_argument("pca_expand: coordinate dimension does not match basis");
  return BlurKernel::from_flat(basis.mean + basis.components.transpose() * reduced.coords);
}

void save_kernels(const std::string& path, const std::vector<BlurKernel>& ks) {
  if (ks.empty()) throw std::invalid_argument("save_kernels: empty list");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_kernels: cannot open " + path);
  os.write("BKRN", 4);
  write_u16(os, 1);  // version
  write_u16(os, static_cast<std::uint16_t>(ks[0].size()));
  write_u32(os, static_cast<std::uint32_t>(ks.size()));
  write_u32(os, 0);  // pad header to 16 bytes
  for (const auto& k : ks) write_f32(os, k.flatten());
  if (!os) throw std::runtime_error("save_kernels: write failed for " + path);
}

std::vector<BlurKernel> load_kernels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_kernels: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "BKRN", 4) != 0)
    throw std::runtime_error("load_kernels: bad magic in " + path);
  const std::uint16_t version = read_u16(is);
  if (version != 1) throw std::runtime_error("load_kernels: unsupported version");
  const int size = read_u16(is);
  const std::uint32_t count = read_u32(is);
  read_u32(is);
  std::vector<BlurKernel> ks;
  ks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i)
    ks.push_back(BlurKernel::from_flat(read_f32(is, Eigen::Index(size) * size)));
  if (!is) throw std::runtime_error("load_kernels: truncated file " + path);
  return ks;
}

void save_pca_basis(const std::string& path, const PcaBasis& basis) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_pca_basis: cannot open " + path);
  os.write("PCAB", 4);
  write_u16(os, 1);
  write_u16(os, static_cast<std::uint16_t>(basis.kernel_size));
  write_u32(os, static_cast<std::uint32_t>(basis.dim()));
  write_u32(os, 0);
  write_f32(os, basis.mean);
  for (int i = 0; i < basis.dim(); ++i) write_f32(os, basis.components.row(i).transpose());
  if (!os) throw std::runtime_error("save_pca_basis: write failed for " + path);
}

PcaBasis load_pca_basis(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_pca_basis: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "PCAB", 4) != 0)
    throw std::runtime_error("load_pca_basis: bad magic in " + path);
  if (read_u16(is) != 1) throw std::runtime_error("load_pca_basis: unsupported version");
  const int size = read_u16(is);
  const int d = static_cast<int>(read_u32(is));
  read_u32(is);
  const Eigen::Index n = Eigen::Index(size) * size;
  PcaBasis basis;
  basis.kernel_size = size;
  basis.mean = read_f32(is, n);
  basis.components.resize(d, n);
  for (int i = 0; i < d; ++i) basis.components.row(i) = read_f32(is, n).transpose();
  if (!is) throw std::runtime_error("load_pca_basis: truncated file " + path);
  return basis;
}

}  // namespace dan
