#include "corrpost/cfsynth/filter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/imagefft/fft.hpp"

namespace corrpost {
namespace {

constexpr std::uint16_t kFilterVersion = 1;

std::vector<Spectrum2D> spectra_of(const TrainingSet& ts) {
  std::vector<Spectrum2D> spectra;
  spectra.reserve(ts.size());
  for (const auto& img : ts.images) spectra.push_back(fft2(img));
  return spectra;
}

}  // namespace

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kOtMach:
      return "otmach";
    case FilterKind::kMinace:
      return "minace";
  }
  return "unknown";
}

FilterKind filter_kind_from_string(std::string_view name) {
  if (name == "otmach") return FilterKind::kOtMach;
  if (name == "minace") return FilterKind::kMinace;
  throw ConfigError("unknown filter kind '" + std::string(name) + "'");
}

void TrainingSet::validate() const {
  if (images.empty()) throw InputError("training set is empty");
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw DimensionError("training images differ in shape");
  }
  if (!labels.empty() && labels.size() != images.size()) {
    throw ParameterError("training set has " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(images.size()) + " images");
  }
  for (double u : labels) {
    if (!std::isfinite(u)) throw ParameterError("training label is not finite");
  }
}

CorrelationFilter synthesize_otmach(const TrainingSet& ts, double alpha, double beta, double gamma) {
  for (double w : {alpha, beta, gamma}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("OT MACH weights must be finite and >= 0");
  }
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) throw ParameterError("OT MACH weights are all zero");
  ts.validate();

  const auto spectra = spectra_of(ts);
  const std::size_t w = ts.images.front().width();
  const std::size_t h = ts.images.front().height();
  const auto n = static_cast<double>(spectra.size());

  CorrelationFilter f;
  f.kind = FilterKind::kOtMach;
  f.params = {alpha, beta, gamma, 0.0};
  f.training_digest = filter_digest(ts);
  f.H = Spectrum2D(w, h);

  bool any_above_floor = false;
  auto out = f.H.data();
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> mean = 0.0;
    double power = 0.0;
    for (const auto& s : spectra) {
      mean += s.data()[k];
      power += std::norm(s.data()[k]);
    }
    mean /= n;
    power /= n;
    double variance = 0.0;
    for (const auto& s : spectra) variance += std::norm(s.data()[k] - mean);
    variance /= n;

    double denom = alpha + beta * power + gamma * variance;
    if (denom >= kOtMachDenominatorFloor) any_above_floor = true;
    denom = std::max(denom, kOtMachDenominatorFloor);
    out[k] = mean / denom;
  }
  if (!any_above_floor) throw DegenerateError("OT MACH denominator vanishes at every frequency");
  return f;
}

double default_minace_noise(const TrainingSet& ts, double fraction) {
  ts.validate();
  const auto spectra = spectra_of(ts);
  double peak = 0.0;
  for (std::size_t k = 0; k < spectra.front().size(); ++k) {
    for (const auto& s : spectra) peak = std::max(peak, std::norm(s.data()[k]));
  }
  return fraction * peak;
}

CorrelationFilter synthesize_minace(const TrainingSet& ts, double noise_c) {
  if (!(noise_c >= 0.0) || !std::isfinite(noise_c)) throw ParameterError("MINACE noise_c must be finite and >= 0");
  ts.validate();

  const auto spectra = spectra_of(ts);
  const std::size_t n = spectra.size();
  const std::size_t bins = spectra.front().size();
  const std::size_t w = ts.images.front().width();
  const std::size_t h = ts.images.front().height();

  // Inverse spectral envelope; bins where every spectrum and the noise floor
  // vanish carry no energy and are left out of the solution.
  std::vector<double> inv_envelope(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    double env = noise_c;
    for (const auto& s : spectra) env = std::max(env, std::norm(s.data()[k]));
    inv_envelope[k] = env > 0.0 ? 1.0 / env : 0.0;
  }

  Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      std::complex<double> acc = 0.0;
      const auto xi = spectra[i].data();
      const auto xj = spectra[j].data();
      for (std::size_t k = 0; k < bins; ++k) acc += std::conj(xi[k]) * xj[k] * inv_envelope[k];
      gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
      gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = std::conj(acc);
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  if (eig.info() != Eigen::Success) throw DegenerateError("MINACE Gram eigen-decomposition failed");
  const auto& lambda = eig.eigenvalues();
  const double lmin = lambda.minCoeff();
  const double lmax = lambda.maxCoeff();
  if (!(lmax > 0.0) || !(lmin > 0.0) || lmax / lmin > kMinaceMaxCondition) {
    throw DegenerateError("MINACE Gram matrix is singular or ill-conditioned (condition estimate " +
                          (lmin > 0.0 ? std::to_string(lmax / lmin) : std::string("inf")) +
                          "); training spectra must be linearly independent");
  }

  const double scale = static_cast<double>(bins);
  Eigen::VectorXcd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = scale * ts.label(i);
  const Eigen::MatrixXcd& v = eig.eigenvectors();
  const Eigen::VectorXcd coeffs = v * (v.adjoint() * rhs).cwiseQuotient(lambda.cast<std::complex<double>>());

  CorrelationFilter f;
  f.kind = FilterKind::kMinace;
  f.params = {0.0, 0.0, 0.0, noise_c};
  f.training_digest = filter_digest(ts);
  f.H = Spectrum2D(w, h);
  auto out = f.H.data();
  for (std::size_t k = 0; k < bins; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += spectra[i].data()[k] * coeffs(static_cast<Eigen::Index>(i));
    out[k] = acc * inv_envelope[k];
  }
  return f;
}

Digest filter_digest(const TrainingSet& ts) {
  std::ostringstream buf(std::ios::binary);
  binio::write_bytes(buf, "TSET");
  binio::write_le<std::uint64_t>(buf, ts.images.size());
  for (const auto& img : ts.images) {
    binio::write_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.width()));
    binio::write_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.height()));
    for (double v : img.data()) binio::write_f64(buf, v);
  }
  for (std::size_t i = 0; i < ts.images.size(); ++i) binio::write_f64(buf, ts.labels.empty() ? 1.0 : ts.labels[i]);
  return sha256(buf.str());
}

ResponseMap cross_correlate(const Image2D& scene, const CorrelationFilter& filter) {
  return cross_correlate(scene, filter.H);
}

std::string encode_filter(const CorrelationFilter& filter) {
  std::ostringstream out(std::ios::binary);
  binio::write_bytes(out, "CFLT");
  binio::write_le<std::uint16_t>(out, kFilterVersion);
  binio::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(filter.kind));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(filter.width()));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(filter.height()));
  binio::write_f64(out, filter.params.alpha);
  binio::write_f64(out, filter.params.beta);
  binio::write_f64(out, filter.params.gamma);
  binio::write_f64(out, filter.params.noise_c);
  out.write(reinterpret_cast<const char*>(filter.training_digest.data()), 32);
  for (const auto& v : filter.H.data()) {
    binio::write_f32(out, static_cast<float>(v.real()));
    binio::write_f32(out, static_cast<float>(v.imag()));
  }
  return out.str();
}

CorrelationFilter decode_filter(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  binio::expect_magic(in, "CFLT");
  const auto version = binio::read_le<std::uint16_t>(in, "CFLT version");
  if (version != kFilterVersion) throw IoError("unsupported CFLT version " + std::to_string(version));
  const auto kind = binio::read_le<std::uint8_t>(in, "CFLT kind");
  if (kind > 1) throw IoError("unknown CFLT filter kind " + std::to_string(kind));
  const auto width = binio::read_le<std::uint32_t>(in, "CFLT width");
  const auto height = binio::read_le<std::uint32_t>(in, "CFLT height");
  CorrelationFilter f;
  f.kind = static_cast<FilterKind>(kind);
  f.params.alpha = binio::read_f64(in, "CFLT alpha");
  f.params.beta = binio::read_f64(in, "CFLT beta");
  f.params.gamma = binio::read_f64(in, "CFLT gamma");
  f.params.noise_c = binio::read_f64(in, "CFLT noise_c");
  binio::read_exact(in, f.training_digest.data(), 32, "CFLT digest");
  std::vector<std::complex<double>> data(static_cast<std::size_t>(width) * height);
  for (auto& v : data) {
    const float re = binio::read_f32(in, "CFLT payload");
    const float im = binio::read_f32(in, "CFLT payload");
    v = {re, im};
  }
  f.H = Spectrum2D(width, height, std::move(data));
  return f;
}

void write_filter(const std::filesystem::path& path, const CorrelationFilter& filter) {
  binio::write_file(path, encode_filter(filter));
}

CorrelationFilter read_filter(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return decode_filter(std::string_view(bytes.data(), bytes.size()));
  } catch (Error& e) {
    e.prepend(path.string());
    throw;
  }
}

}  // namespace corrpost
