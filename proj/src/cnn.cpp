#include "msf/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "msf/error.hpp"
#include "msf/io.hpp"

namespace msf {

using json = nlohmann::json;

std::size_t CnnWeights::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kernel.size() + l.bias.size();
  return n;
}

void CnnWeights::validate() const {
  using K = LoadError::Kind;
  if (layers.empty()) throw LoadError(K::ShapeChain, "network has no layers");
  if (layers.front().in_ch != Slab2_5D::kChannels)
    throw LoadError(K::ShapeChain, "first layer must take 5 input channels, got " +
                                       std::to_string(layers.front().in_ch));
  if (layers.back().out_ch != 1)
    throw LoadError(K::ShapeChain, "last layer must produce 1 channel, got " +
                                       std::to_string(layers.back().out_ch));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kh != 3 || l.kw != 3)
      throw LoadError(K::ShapeChain, "layer " + std::to_string(i) + " kernel is not 3x3");
    if (l.out_ch == 0 || l.in_ch == 0)
      throw LoadError(K::ShapeChain, "layer " + std::to_string(i) + " has an empty channel count");
    if (i + 1 < layers.size() && layers[i + 1].in_ch != l.out_ch)
      throw LoadError(K::ShapeChain, "layer " + std::to_string(i) + " outputs " +
                                         std::to_string(l.out_ch) + " channels but layer " +
                                         std::to_string(i + 1) + " expects " +
                                         std::to_string(layers[i + 1].in_ch));
    if (l.kernel.size() != l.out_ch * l.in_ch * l.kh * l.kw || l.bias.size() != l.out_ch)
      throw LoadError(K::PayloadLength, "layer " + std::to_string(i) + " tensor sizes do not match its shape");
    for (float w : l.kernel)
      if (!std::isfinite(w)) throw InvalidInput("non-finite kernel weight in layer " + std::to_string(i));
    for (float b : l.bias)
      if (!std::isfinite(b)) throw InvalidInput("non-finite bias in layer " + std::to_string(i));
  }
}

CnnWeights CnnWeights::zeros(std::size_t n_layers, std::size_t width) {
  CnnWeights w;
  w.width = width;
  for (std::size_t i = 0; i < n_layers; ++i) {
    ConvLayer l;
    l.in_ch = i == 0 ? Slab2_5D::kChannels : width;
    l.out_ch = i + 1 == n_layers ? 1 : width;
    l.kernel.assign(l.out_ch * l.in_ch * 9, 0.0f);
    l.bias.assign(l.out_ch, 0.0f);
    w.layers.push_back(std::move(l));
  }
  return w;
}

namespace {

// Copies `ch` planes of rows x cols into a buffer with a one-pixel replicate border.
void pad_replicate(const std::vector<float>& in, std::size_t ch, std::size_t rows, std::size_t cols,
                   std::vector<float>& padded) {
  const std::size_t pr = rows + 2, pc = cols + 2;
  padded.resize(ch * pr * pc);
  for (std::size_t c = 0; c < ch; ++c) {
    const float* src = in.data() + c * rows * cols;
    float* dst = padded.data() + c * pr * pc;
    for (std::size_t r = 0; r < pr; ++r) {
      const std::size_t sr = std::clamp<std::size_t>(r, 1, rows) - 1;
      float* drow = dst + r * pc;
      std::copy_n(src + sr * cols, cols, drow + 1);
      drow[0] = drow[1];
      drow[pc - 1] = drow[pc - 2];
    }
  }
}

}  // namespace

std::vector<float> cnn_correction(const CnnWeights& weights, const Slab2_5D& slab) {
  // A broken chain in memory is a bad argument here, not a load failure.
  try {
    weights.validate();
  } catch (const LoadError& e) {
    throw InvalidInput(e.what());
  }
  if (slab.data.size() != Slab2_5D::kChannels * slab.rows * slab.cols)
    throw InvalidInput("slab does not hold 5 channels of its stated size");
  if (slab.rows < 3 || slab.cols < 3) throw InvalidInput("slab must be at least 3x3 for 3x3 kernels");
  for (double v : slab.data)
    if (!std::isfinite(v)) throw InvalidInput("slab contains non-finite values");

  const std::size_t rows = slab.rows, cols = slab.cols, plane = rows * cols;
  const std::size_t pc = cols + 2;
  std::vector<float> act(slab.data.begin(), slab.data.end());
  std::vector<float> padded, next;

  for (std::size_t li = 0; li < weights.layers.size(); ++li) {
    const ConvLayer& l = weights.layers[li];
    pad_replicate(act, l.in_ch, rows, cols, padded);
    next.assign(l.out_ch * plane, 0.0f);
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      float* out = next.data() + o * plane;
      std::fill(out, out + plane, l.bias[o]);
      for (std::size_t i = 0; i < l.in_ch; ++i) {
        const float* k = l.kernel.data() + (o * l.in_ch + i) * 9;
        const float* src = padded.data() + i * (rows + 2) * pc;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const float w = k[ky * 3 + kx];
            if (w == 0.0f) continue;
            for (std::size_t r = 0; r < rows; ++r) {
              const float* s = src + (r + ky) * pc + kx;
              float* d = out + r * cols;
              for (std::size_t c = 0; c < cols; ++c) d[c] += w * s[c];
            }
          }
        }
      }
      if (li + 1 < weights.layers.size())
        for (std::size_t p = 0; p < plane; ++p) out[p] = std::max(out[p], 0.0f);
    }
    act.swap(next);
  }
  return act;
}

Image2D cnn_infer(const CnnWeights& weights, const Slab2_5D& slab) {
  const std::vector<float> correction = cnn_correction(weights, slab);
  Image2D out(slab.rows, slab.cols);
  const auto center = slab.center();
  for (std::size_t p = 0; p < out.data.size(); ++p)
    out.data[p] = center[p] + static_cast<double>(correction[p]);
  return out;
}

namespace {

std::vector<float> read_payload(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open weight payload " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(float))
    throw LoadError(LoadError::Kind::PayloadLength,
                    "weight payload " + path.string() + " holds " + std::to_string(bytes) +
                        " bytes, manifest requires " + std::to_string(expected * sizeof(float)));
  in.seekg(0);
  std::vector<double> tmp = read_f32(path, expected);
  return {tmp.begin(), tmp.end()};
}

}  // namespace

CnnWeights load_weights(const std::filesystem::path& manifest) {
  using K = LoadError::Kind;
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open weight manifest " + manifest.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError(K::Manifest, "weight manifest " + manifest.string() + " is not valid JSON: " + e.what());
  }

  CnnWeights w;
  std::size_t total = 0;
  try {
    if (j.value("version", 0) != 1) throw LoadError(K::Manifest, "unsupported weight manifest version");
    w.width = j.value("width", std::size_t{64});
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw LoadError(K::Manifest, "manifest lists no layers");
    for (const auto& lj : layers) {
      ConvLayer l;
      l.out_ch = lj.at("out").get<std::size_t>();
      l.in_ch = lj.at("in").get<std::size_t>();
      l.kh = lj.at("kh").get<std::size_t>();
      l.kw = lj.at("kw").get<std::size_t>();
      total += l.out_ch * l.in_ch * l.kh * l.kw + l.out_ch;
      w.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw LoadError(K::Manifest, "weight manifest " + manifest.string() + " is malformed: " + e.what());
  }

  // Shape chain is checked before touching the payload.
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    l.kernel.assign(l.out_ch * l.in_ch * l.kh * l.kw, 0.0f);
    l.bias.assign(l.out_ch, 0.0f);
  }
  w.validate();

  const std::vector<float> payload = read_payload(resolve_payload(manifest, j.value("payload", std::string{})), total);
  std::size_t off = 0;
  for (auto& l : w.layers) {
    std::copy_n(payload.begin() + off, l.kernel.size(), l.kernel.begin());
    off += l.kernel.size();
    std::copy_n(payload.begin() + off, l.bias.size(), l.bias.begin());
    off += l.bias.size();
  }
  w.validate();
  return w;
}

void save_weights(const CnnWeights& weights, const std::filesystem::path& manifest) {
  weights.validate();
  json j;
  j["version"] = 1;
  j["width"] = weights.width;
  j["layers"] = json::array();
  for (const auto& l : weights.layers)
    j["layers"].push_back({{"out", l.out_ch}, {"in", l.in_ch}, {"kh", l.kh}, {"kw", l.kw}});
  const auto payload = std::filesystem::path(manifest).replace_extension(".bin");
  j["payload"] = payload.filename().string();

  std::ofstream m(manifest);
  if (!m) throw IoError("cannot write weight manifest " + manifest.string());
  m << j.dump(2) << '\n';

  std::ofstream p(payload, std::ios::binary);
  if (!p) throw IoError("cannot write weight payload " + payload.string());
  for (const auto& l : weights.layers) {
    append_f32(p, std::vector<double>(l.kernel.begin(), l.kernel.end()));
    append_f32(p, std::vector<double>(l.bias.begin(), l.bias.end()));
  }
  if (!p) throw IoError("failed writing weight payload " + payload.string());
}

std::vector<ParityCase> load_parity_vectors(const std::filesystem::path& manifest) {
  using K = LoadError::Kind;
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open parity manifest " + manifest.string());
  json j;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  try {
    in >> j;
    if (j.value("version", 0) != 1) throw LoadError(K::Manifest, "unsupported parity manifest version");
    for (const auto& c : j.at("cases"))
      shapes.emplace_back(c.at("rows").get<std::size_t>(), c.at("cols").get<std::size_t>());
  } catch (const json::exception& e) {
    throw LoadError(K::Manifest, "parity manifest " + manifest.string() + " is malformed: " + e.what());
  }
  std::size_t total = 0;
  for (auto [r, c] : shapes) total += (Slab2_5D::kChannels + 1) * r * c;

  const auto path = resolve_payload(manifest, j.value("payload", std::string{}));
  std::ifstream probe(path, std::ios::binary | std::ios::ate);
  if (!probe) throw IoError("cannot open parity payload " + path.string());
  if (static_cast<std::size_t>(probe.tellg()) != total * sizeof(float))
    throw LoadError(K::PayloadLength, "parity payload " + path.string() + " has the wrong length");
  const std::vector<double> values = read_f32(path, total);

  std::vector<ParityCase> cases;
  std::size_t off = 0;
  for (auto [r, c] : shapes) {
    ParityCase pc;
    pc.slab.rows = r;
    pc.slab.cols = c;
    pc.slab.data.assign(values.begin() + off, values.begin() + off + Slab2_5D::kChannels * r * c);
    off += Slab2_5D::kChannels * r * c;
    pc.expected = Image2D(r, c);
    std::copy_n(values.begin() + off, r * c, pc.expected.data.begin());
    off += r * c;
    cases.push_back(std::move(pc));
  }
  return cases;
}

void save_parity_vectors(const std::vector<ParityCase>& cases, const std::filesystem::path& manifest) {
  json j;
  j["version"] = 1;
  j["cases"] = json::array();
  for (const auto& c : cases) j["cases"].push_back({{"rows", c.slab.rows}, {"cols", c.slab.cols}});
  const auto payload = std::filesystem::path(manifest).replace_extension(".bin");
  j["payload"] = payload.filename().string();
  std::ofstream m(manifest);
  if (!m) throw IoError("cannot write parity manifest " + manifest.string());
  m << j.dump(2) << '\n';
  std::ofstream p(payload, std::ios::binary);
  if (!p) throw IoError("cannot write parity payload " + payload.string());
  for (const auto& c : cases) {
    append_f32(p, c.slab.data);
    append_f32(p, c.expected.data);
  }
}

}  // namespace msf
