#include "corrpost/tensornet/model.hpp"

#include <cmath>
#include <json.hpp>
#include <random>
#include <sstream>

#include "corrpost/common/binary_io.hpp"

namespace corrpost::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInputBn: return "INPUTBN";
    case LayerKind::kConv3x3: return "CONV3x3";
    case LayerKind::kConv1x1: return "CONV1x1";
    case LayerKind::kBatchNorm: return "BATCHNORM";
    case LayerKind::kSwish: return "SWISH";
    case LayerKind::kResBlock: return "RESBLOCK";
    case LayerKind::kGlobalAvgPool: return "GLOBALAVGPOOL";
    case LayerKind::kDense: return "DENSE";
    case LayerKind::kSigmoid: return "SIGMOID";
  }
  return "?";
}

std::vector<std::size_t> ArchSpec::stage_widths() const {
  std::vector<std::size_t> widths;
  for (auto m : stage_multipliers) widths.push_back(base_width * m);
  return widths;
}

void ArchSpec::validate() const {
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (stage_multipliers.empty() || blocks_per_stage < 1) throw ConfigError("architecture needs at least one block");
  for (auto m : stage_multipliers) {
    if (m < 1) throw ConfigError("stage multipliers must be >= 1");
  }
  const std::size_t downsample = std::size_t{1} << (stage_multipliers.size() - 1);
  if (input_side % downsample != 0) throw ConfigError("input side not divisible by the total stride");
}

template <typename T>
ResNet<T>::ResNet(const ArchSpec& spec, std::uint64_t init_seed)
    : spec_((spec.validate(), spec)),
      input_bn_(1, "input_bn"),
      stem_(1, spec.base_width, 3, 1, "stem.conv"),
      stem_bn_(spec.base_width, "stem.bn"),
      head_(spec.stage_widths().back(), "head") {
  const auto widths = spec_.stage_widths();
  std::size_t in = spec_.base_width;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < spec_.blocks_per_stage; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      blocks_.push_back(std::make_unique<ResidualBlock<T>>(in, widths[s], stride, name));
      block_strides_.push_back(stride);
      in = widths[s];
    }
  }

  // He-normal convolutions, Glorot-uniform head, zero head bias.
  std::mt19937_64 rng(init_seed);
  for (auto* p : parameters()) {
    if (!p->decayed) continue;
    const auto& shape = p->value.shape();
    if (shape.size() == 4) {
      const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : p->value.data()) v = static_cast<T>(dist(rng));
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + 1));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : p->value.data()) v = static_cast<T>(dist(rng));
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> ResNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  input_bn_.collect(out);
  stem_.collect(out);
  stem_bn_.collect(out);
  for (auto& b : blocks_) b->collect(out);
  head_.collect(out);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> ResNet<T>::trainable_parameters() {
  std::vector<Parameter<T>*> out;
  for (auto* p : parameters()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

template <typename T>
std::size_t ResNet<T>::param_count() {
  std::size_t n = 0;
  for (auto* p : trainable_parameters()) n += p->value.size();
  return n;
}

template <typename T>
void ResNet<T>::zero_grad() {
  for (auto* p : trainable_parameters()) p->grad.fill(T(0));
}

template <typename T>
Tensor<T> ResNet<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 1) throw ShapeError("ResNet: expected [N,1,H,W] input, got " + x.shape_string());
  Tensor<T> h = stem_act_.forward(stem_bn_.forward(stem_.forward(input_bn_.forward(x, mode), mode), mode), mode);
  for (auto& b : blocks_) h = b->forward(h, mode);
  Tensor<T> out = head_.forward(pool_.forward(h, mode), mode);
  recorded_ = mode == Mode::kTrain;
  last_output_ = recorded_ ? out : Tensor<T>();
  return out;
}

template <typename T>
T ResNet<T>::loss(const Tensor<T>& labels, T l2) {
  if (!recorded_) throw StateError("ResNet: loss requested without a recorded training forward pass");
  return bce_loss(last_output_, labels, parameters(), l2);
}

template <typename T>
void ResNet<T>::backward(const Tensor<T>& labels, T l2) {
  if (!recorded_) throw StateError("ResNet: backward without a recorded training forward pass");
  zero_grad();
  Tensor<T> g = head_.backward(bce_gradient(last_output_, labels));
  g = pool_.backward(g);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
  g = stem_.backward(stem_bn_.backward(stem_act_.backward(g)));
  input_bn_.backward(g);
  add_l2_gradient(parameters(), l2);
  recorded_ = false;
  last_output_ = Tensor<T>();
}

template <typename T>
std::vector<LayerSpec> ResNet<T>::architecture() const {
  std::vector<LayerSpec> rows;
  std::size_t side = spec_.input_side;
  const std::size_t w = spec_.base_width;
  rows.push_back({LayerKind::kInputBn, 1, 1, "input_bn", {1, side, side}});
  rows.push_back({LayerKind::kConv3x3, w, 1, "stem.conv", {w, side, side}});
  rows.push_back({LayerKind::kBatchNorm, w, 1, "stem.bn", {w, side, side}});
  rows.push_back({LayerKind::kSwish, w, 1, "stem.swish", {w, side, side}});
  const auto widths = spec_.stage_widths();
  std::size_t k = 0;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (std::size_t b = 0; b < spec_.blocks_per_stage; ++b, ++k) {
      side /= block_strides_[k];
      rows.push_back({LayerKind::kResBlock, widths[s], block_strides_[k],
                      "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1), {widths[s], side, side}});
    }
  }
  rows.push_back({LayerKind::kGlobalAvgPool, widths.back(), 1, "pool", {widths.back()}});
  rows.push_back({LayerKind::kDense, 1, 1, "head", {1}});
  rows.push_back({LayerKind::kSigmoid, 1, 1, "head.sigmoid", {1}});
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace

template <typename T>
std::string encode_checkpoint(ResNet<T>& model) {
  const auto params = model.parameters();
  std::ostringstream out(std::ios::binary);
  binio::write_bytes(out, "CNNW");
  binio::write_le<std::uint16_t>(out, kCheckpointVersion);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    binio::write_bytes(out, p->name);
    binio::write_le<std::uint8_t>(out, dtype_code<T>());
    binio::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p->value.rank()));
    for (auto d : p->value.shape()) binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (T v : p->value.data()) {
      if constexpr (std::is_same_v<T, float>) {
        binio::write_f32(out, v);
      } else {
        binio::write_f64(out, v);
      }
    }
  }
  return out.str();
}

template <typename T>
void decode_checkpoint(std::string_view bytes, ResNet<T>& model) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  binio::expect_magic(in, "CNNW");
  const auto version = binio::read_le<std::uint16_t>(in, "CNNW version");
  if (version != kCheckpointVersion) throw IoError("unsupported CNNW version " + std::to_string(version));
  const auto count = binio::read_le<std::uint32_t>(in, "CNNW tensor count");
  auto params = model.parameters();
  if (count != params.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (auto* p : params) {
    const auto len = binio::read_le<std::uint16_t>(in, "CNNW name length");
    std::string name(len, '\0');
    binio::read_exact(in, name.data(), len, "CNNW name");
    if (name != p->name) throw IoError("checkpoint tensor '" + name + "' where '" + p->name + "' was expected");
    const auto dtype = binio::read_le<std::uint8_t>(in, "CNNW dtype");
    if (dtype > 1) throw IoError("checkpoint tensor '" + name + "' has unknown dtype");
    const auto rank = binio::read_le<std::uint8_t>(in, "CNNW rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = binio::read_le<std::uint32_t>(in, "CNNW dims");
    if (shape != p->value.shape()) throw IoError("checkpoint tensor '" + name + "' has the wrong shape");
    for (auto& v : p->value.data()) {
      v = dtype == 0 ? static_cast<T>(binio::read_f32(in, "CNNW payload"))
                     : static_cast<T>(binio::read_f64(in, "CNNW payload"));
    }
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, ResNet<T>& model) {
  binio::write_file(path, encode_checkpoint(model));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ResNet<T>& model) {
  const auto bytes = binio::read_file(path);
  try {
    decode_checkpoint(std::string_view(bytes.data(), bytes.size()), model);
  } catch (Error& e) {
    e.prepend(path.string());
    throw;
  }
}

template <typename T>
std::string architecture_json(ResNet<T>& model) {
  nlohmann::ordered_json j;
  const auto& spec = model.spec();
  j["family"] = "slim-resnet18";
  j["block_form"] = "post-activation basic block (conv-bn-swish-conv-bn + skip, swish after sum)";
  j["activation"] = "swish";
  j["stem"] = "conv3x3 stride 1, no max pooling";
  j["base_width"] = spec.base_width;
  j["stage_multipliers"] = spec.stage_multipliers;
  j["stage_widths"] = spec.stage_widths();
  j["blocks_per_stage"] = spec.blocks_per_stage;
  j["input_side"] = spec.input_side;
  j["param_count"] = model.param_count();
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& row : model.architecture()) {
    layers.push_back({{"name", row.name},
                      {"kind", std::string(to_string(row.kind))},
                      {"width", row.width},
                      {"stride", row.stride},
                      {"output_shape", row.output_shape}});
  }
  return j.dump(2) + "\n";
}

ArchSpec arch_spec_from_json(std::string_view json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    ArchSpec spec;
    spec.base_width = j.at("base_width").get<std::size_t>();
    spec.stage_multipliers = j.at("stage_multipliers").get<std::vector<std::size_t>>();
    spec.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
    spec.input_side = j.value("input_side", std::size_t{32});
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture json: ") + e.what());
  }
}

#define CORRPOST_INSTANTIATE_MODEL(T)                                                   \
  template class ResNet<T>;                                                             \
  template std::string encode_checkpoint<T>(ResNet<T>&);                                \
  template void decode_checkpoint<T>(std::string_view, ResNet<T>&);                     \
  template void save_checkpoint<T>(const std::filesystem::path&, ResNet<T>&);           \
  template void load_checkpoint<T>(const std::filesystem::path&, ResNet<T>&);           \
  template std::string architecture_json<T>(ResNet<T>&);

CORRPOST_INSTANTIATE_MODEL(float)
CORRPOST_INSTANTIATE_MODEL(double)

}  // namespace corrpost::nn
