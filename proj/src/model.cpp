#include "avuseg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace avuseg {

namespace {

Tensor relu(const Tensor& x) { return maximum_scalar(x, 0.0); }

std::vector<double> fan_in_uniform(std::int64_t count, std::int64_t fan_in,
                                   Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(count);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "det") return Variant::Det;
  if (s == "bayes-mid") return Variant::BayesMid;
  if (s == "bayes-head") return Variant::BayesHead;
  throw DomainError("unknown model variant: " + s);
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::Det: return "det";
    case Variant::BayesMid: return "bayes-mid";
    case Variant::BayesHead: return "bayes-head";
  }
  throw DomainError("bad variant enum");
}

Tensor SegModel::Layer::apply(const Tensor& x, Rng* rng) const {
  if (bayesian) return flip.forward(x, rng);
  return add_channel_bias(conv2d(x, w, padding, dilation), b);
}

SegModel::Layer SegModel::make_layer(const std::string& name,
                                     std::int64_t in_ch, std::int64_t out_ch,
                                     std::int64_t k, std::int64_t dilation,
                                     bool bayesian, Rng& rng) {
  Layer l;
  l.name = name;
  l.bayesian = bayesian;
  l.dilation = dilation;
  if (bayesian) {
    l.flip = FlipoutConv2d::init(in_ch, out_ch, k, Padding::Same, dilation,
                                 rng, cfg_.init_std_scale);
    l.flip.prior_std = cfg_.prior_std;
    params_.emplace_back(name + ".w_mu", l.flip.w_mu);
    params_.emplace_back(name + ".w_rho", l.flip.w_rho);
    params_.emplace_back(name + ".b_mu", l.flip.b_mu);
    params_.emplace_back(name + ".b_rho", l.flip.b_rho);
  } else {
    const std::int64_t n = out_ch * in_ch * k * k;
    l.w = Tensor::param({out_ch, in_ch, k, k},
                        fan_in_uniform(n, in_ch * k * k, rng));
    l.b = Tensor::param({out_ch}, std::vector<double>(out_ch, 0.0));
    params_.emplace_back(name + ".w", l.w);
    params_.emplace_back(name + ".b", l.b);
  }
  return l;
}

SegModel::SegModel(const SegModelConfig& cfg) : cfg_(cfg) {
  if (cfg_.num_classes < 2) throw DomainError("model: num_classes must be >= 2");
  if (cfg_.c1 < 1 || cfg_.c2 < 1) throw DomainError("model: bad channel config");
  if (cfg_.dilations.size() != 4)
    throw DomainError("model: expected 4 middle dilation rates");
  for (auto d : cfg_.dilations)
    if (d < 1) throw DomainError("model: dilation must be >= 1");

  Rng rng(substream_seed(cfg_.init_seed, 0xA11));
  const bool mid_bayes = cfg_.variant == Variant::BayesMid;
  const bool head_bayes = cfg_.variant == Variant::BayesHead;
  const auto c1 = cfg_.c1, c2 = cfg_.c2, C = cfg_.num_classes;

  layers_.push_back(make_layer("enc1a", 1, c1, 3, 1, false, rng));
  layers_.push_back(make_layer("enc1b", c1, c1, 3, 1, false, rng));
  layers_.push_back(make_layer("enc2", c1, c2, 3, 1, false, rng));
  for (int i = 0; i < 4; ++i)
    layers_.push_back(make_layer("mid" + std::to_string(i), c2, c2, 3,
                                 cfg_.dilations[i], mid_bayes, rng));
  layers_.push_back(make_layer("dec2a", c2, c2, 3, 1, head_bayes, rng));
  layers_.push_back(make_layer("dec2b", c2, c1, 3, 1, head_bayes, rng));
  layers_.push_back(make_layer("dec1a", c1, c1, 3, 1, head_bayes, rng));
  layers_.push_back(make_layer("head", c1, C, 1, 1, head_bayes, rng));
}

Tensor SegModel::forward_logits(const Tensor& x, Rng* rng) const {
  if (x.shape().size() != 4 || x.shape()[1] != 1)
    throw ShapeError("model: expected (N,1,H,W) input, got " +
                     shape_str(x.shape()));
  if (x.shape()[2] % 4 != 0 || x.shape()[3] % 4 != 0)
    throw ShapeError("model: spatial dims must be divisible by 4");
  const Layer *enc1a = &layers_[0], *enc1b = &layers_[1], *enc2 = &layers_[2];
  const Layer* mid = &layers_[3];
  const Layer *dec2a = &layers_[7], *dec2b = &layers_[8], *dec1a = &layers_[9],
              *head = &layers_[10];

  Tensor e1 = relu(enc1a->apply(x, rng));
  e1 = relu(enc1b->apply(e1, rng));
  const Tensor p1 = maxpool2(e1);
  const Tensor e2 = relu(enc2->apply(p1, rng));
  Tensor m = maxpool2(e2);
  for (int i = 0; i < 4; ++i) m = relu(mid[i].apply(m, rng));
  Tensor d2 = relu(add(dec2a->apply(upsample2(m), rng), e2));
  d2 = relu(dec2b->apply(d2, rng));
  Tensor d1 = relu(add(dec1a->apply(upsample2(d2), rng), e1));
  return head->apply(d1, rng);
}

Tensor SegModel::forward_probs(const Tensor& x, Rng* rng) const {
  return softmax(forward_logits(x, rng), 1);
}

std::int64_t SegModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void SegModel::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["format"] = "AVUSEG-CKPT";
  manifest["version"] = 1;
  manifest["model"] = {{"variant", variant_to_string(cfg_.variant)},
                       {"num_classes", cfg_.num_classes},
                       {"c1", cfg_.c1},
                       {"c2", cfg_.c2},
                       {"dilations", cfg_.dilations},
                       {"init_std_scale", cfg_.init_std_scale},
                       {"prior_std", cfg_.prior_std},
                       {"init_seed", cfg_.init_seed}};
  std::string payload;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, t] : params_) {
    plist.push_back({{"name", name},
                     {"shape", t.shape()},
                     {"offset", payload.size() / 8},
                     {"count", t.size()}});
    const std::size_t off = payload.size();
    payload.resize(off + t.size() * 8);
    std::memcpy(payload.data() + off, t.values().data(), t.size() * 8);
  }
  manifest["params"] = std::move(plist);

  const std::string mjson = manifest.dump();
  std::string buf = "UECKPT1\n";
  std::uint32_t mlen = static_cast<std::uint32_t>(mjson.size());
  buf.append(reinterpret_cast<const char*>(&mlen), 4);
  buf += mjson;
  buf += payload;
  const std::uint64_t crc = crc64(payload.data(), payload.size());
  buf.append(reinterpret_cast<const char*>(&crc), 8);

  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

SegModel SegModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.rfind("UECKPT1\n", 0) != 0)
    throw IoBadMagic("not a checkpoint: " + path.string());
  std::uint32_t mlen;
  std::memcpy(&mlen, buf.data() + 8, 4);
  if (buf.size() < 12 + mlen + 8)
    throw IoTruncated("truncated checkpoint: " + path.string());
  const auto manifest = nlohmann::json::parse(buf.substr(12, mlen));
  if (manifest.at("version").get<int>() != 1)
    throw IoInvariant("unsupported checkpoint version");

  SegModelConfig cfg;
  const auto& m = manifest.at("model");
  cfg.variant = variant_from_string(m.at("variant").get<std::string>());
  cfg.num_classes = m.at("num_classes").get<std::int64_t>();
  cfg.c1 = m.at("c1").get<std::int64_t>();
  cfg.c2 = m.at("c2").get<std::int64_t>();
  cfg.dilations = m.at("dilations").get<std::vector<std::int64_t>>();
  cfg.init_std_scale = m.at("init_std_scale").get<double>();
  cfg.prior_std = m.at("prior_std").get<double>();
  cfg.init_seed = m.at("init_seed").get<std::uint64_t>();

  SegModel model(cfg);
  const char* payload = buf.data() + 12 + mlen;
  const std::size_t payload_len = buf.size() - 12 - mlen - 8;
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != crc64(payload, payload_len))
    throw IoBadChecksum("checkpoint CRC mismatch: " + path.string());

  std::size_t pi = 0;
  for (const auto& entry : manifest.at("params")) {
    if (pi >= model.params_.size())
      throw IoInvariant("checkpoint has extra parameters");
    auto& [name, t] = model.params_[pi++];
    if (entry.at("name").get<std::string>() != name)
      throw IoInvariant("checkpoint parameter order mismatch at " + name);
    const std::size_t count = entry.at("count").get<std::size_t>();
    const std::size_t offset = entry.at("offset").get<std::size_t>() * 8;
    if (count != t.values().size() || offset + count * 8 > payload_len)
      throw IoInvariant("checkpoint parameter size mismatch at " + name);
    std::memcpy(t.mutable_values().data(), payload + offset, count * 8);
  }
  if (pi != model.params_.size())
    throw IoInvariant("checkpoint missing parameters");
  return model;
}

Tensor image_to_tensor(const ScalarVolume& image) {
  const auto& d = image.dims();
  // (Z,1,Y,X); volume storage is already x fastest, then y, then z.
  return Tensor::constant({d.z, 1, d.y, d.x}, image.data());
}

ProbVolume tensor_to_prob_volume(const Tensor& probs, const Dims3& dims) {
  const auto& s = probs.shape();
  if (s.size() != 4 || s[0] != dims.z || s[2] != dims.y || s[3] != dims.x)
    throw ShapeError("tensor_to_prob_volume: shape mismatch");
  const std::int64_t C = s[1], YX = dims.y * dims.x;
  std::vector<double> data(static_cast<std::size_t>(dims.voxels() * C));
  const auto& pv = probs.values();
  for (std::int64_t z = 0; z < dims.z; ++z)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < YX; ++i)
        data[(z * YX + i) * C + c] = pv[(z * C + c) * YX + i];
  return ProbVolume(dims, C, std::move(data));
}

namespace {

ProbVolume average_passes(const std::vector<std::vector<double>>& passes,
                          const Dims3& dims, std::int64_t C) {
  std::vector<double> acc(passes.front().size(), 0.0);
  for (const auto& p : passes)
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  const double inv = 1.0 / static_cast<double>(passes.size());
  for (auto& v : acc) v *= inv;
  return tensor_to_prob_volume(Tensor::constant({dims.z, C, dims.y, dims.x},
                                                std::move(acc)),
                               dims);
}

}  // namespace

ProbVolume mc_predict(const SegModel& model, const ScalarVolume& image,
                      std::int64_t samples, std::uint64_t seed) {
  if (samples < 1) throw DomainError("mc_predict: samples must be >= 1");
  const Tensor x = image_to_tensor(image);
  std::vector<std::vector<double>> passes(samples);
  for (std::int64_t m = 0; m < samples; ++m) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(m)));
    passes[m] = model.forward_probs(x, &rng).values();
  }
  return average_passes(passes, image.dims(), model.config().num_classes);
}

ProbVolume ensemble_predict(const std::vector<SegModel>& members,
                            const ScalarVolume& image) {
  if (members.size() < 2)
    throw DomainError("ensemble_predict: need at least 2 members");
  const std::int64_t C = members.front().config().num_classes;
  for (const auto& m : members)
    if (m.config().num_classes != C)
      throw DomainError("ensemble_predict: class-count mismatch");
  const Tensor x = image_to_tensor(image);
  std::vector<std::vector<double>> passes;
  passes.reserve(members.size());
  for (const auto& m : members)
    passes.push_back(m.forward_probs(x, nullptr).values());
  return average_passes(passes, image.dims(), C);
}

ProbVolume tta_predict(const SegModel& model, const ScalarVolume& image,
                       std::int64_t reps, double noise_sigma,
                       double removal_rate, std::uint64_t seed) {
  if (reps < 1) throw DomainError("tta_predict: reps must be >= 1");
  if (noise_sigma < 0.0) throw DomainError("tta_predict: sigma must be >= 0");
  if (!(removal_rate >= 0.0 && removal_rate < 1.0))
    throw DomainError("tta_predict: removal rate must be in [0,1)");
  const auto& base = image.data();
  std::vector<std::vector<double>> passes;
  passes.reserve(2 * reps);
  for (std::int64_t m = 0; m < reps; ++m) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(m)));
    std::normal_distribution<double> noise(0.0, noise_sigma);
    std::vector<double> img = base;
    if (noise_sigma > 0.0)
      for (auto& v : img) v = std::clamp(v + noise(rng), 0.0, 1.0);
    const Tensor x = Tensor::constant(
        {image.dims().z, 1, image.dims().y, image.dims().x}, std::move(img));
    passes.push_back(model.forward_probs(x, nullptr).values());
  }
  for (std::int64_t m = 0; m < reps; ++m) {
    Rng rng(substream_seed(seed, 0x1000 + static_cast<std::uint64_t>(m)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> img = base;
    if (removal_rate > 0.0)
      for (auto& v : img)
        if (unif(rng) < removal_rate) v = 0.0;
    const Tensor x = Tensor::constant(
        {image.dims().z, 1, image.dims().y, image.dims().x}, std::move(img));
    passes.push_back(model.forward_probs(x, nullptr).values());
  }
  return average_passes(passes, image.dims(), model.config().num_classes);
}

}  // namespace avuseg
