#include "ragpoison/embed.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "ragpoison/error.hpp"
#include "ragpoison/hash.hpp"
#include "ragpoison/protocol.hpp"
#include "ragpoison/rng.hpp"

namespace ragpoison {

const char* to_string(BackendDescriptor::Kind kind) {
  return kind == BackendDescriptor::Kind::toy ? "toy" : "external";
}

BackendDescriptor::Kind parse_backend_kind(const std::string& s) {
  if (s == "toy") return BackendDescriptor::Kind::toy;
  if (s == "external") return BackendDescriptor::Kind::external;
  throw ValidationError("unknown backend kind '" + s + "' (expected toy or external)");
}

void BackendDescriptor::validate() const {
  if (dim <= 0) throw ValidationError("backend dim must be > 0");
  if (!(fusion_weight >= 0.0 && fusion_weight <= 1.0)) throw ValidationError("fusion weight must be in [0,1]");
  if (kind == Kind::external && endpoint.empty()) throw ValidationError("external backend requires an endpoint");
}

std::string BackendDescriptor::hash() const {
  Sha256 h;
  h.update_field("backend-v1");
  h.update_field(to_string(kind));
  h.update_u64(static_cast<std::uint64_t>(dim));
  if (kind == Kind::toy) {
    h.update_f64(fusion_weight);
    h.update_u64(seed);
  } else {
    h.update_field(endpoint);
  }
  return to_hex(h.finish());
}

std::vector<std::string> toy_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    // Bytes >= 0x80 belong to UTF-8 sequences and are kept inside tokens.
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

ToyBackend::ToyBackend(BackendDescriptor desc) : desc_(std::move(desc)) {
  desc_.kind = BackendDescriptor::Kind::toy;
  desc_.validate();
  const auto d = static_cast<std::size_t>(desc_.dim);
  Rng ri(derive_seed(desc_.seed, {"toy-image-projection"}));
  w_image_.resize(d * kPooled);
  const double si = 1.0 / std::sqrt(static_cast<double>(kPooled));
  for (double& w : w_image_) w = ri.normal() * si;
  Rng rt(derive_seed(desc_.seed, {"toy-text-projection"}));
  w_text_.resize(static_cast<std::size_t>(kBins) * d);
  const double st = 1.0 / std::sqrt(static_cast<double>(desc_.dim));
  for (double& w : w_text_) w = rt.normal() * st;
}

std::vector<double> ToyBackend::pool(const Image& image) const {
  if (image.height() < kGrid || image.width() < kGrid)
    throw ValidationError("image must be at least 8x8 for the toy encoder");
  std::vector<double> sums(kPooled, 0.0);
  std::vector<int> counts(kGrid * kGrid, 0);
  for (int y = 0; y < image.height(); ++y) {
    const int gy = y * kGrid / image.height();
    for (int x = 0; x < image.width(); ++x) {
      const int gx = x * kGrid / image.width();
      ++counts[gy * kGrid + gx];
      for (int c = 0; c < 3; ++c) sums[(c * kGrid + gy) * kGrid + gx] += image.at(y, x, c);
    }
  }
  for (int c = 0; c < 3; ++c)
    for (int cell = 0; cell < kGrid * kGrid; ++cell) sums[c * kGrid * kGrid + cell] /= counts[cell];
  return sums;
}

std::vector<double> ToyBackend::project_image(const Image& image) const {
  const auto p = pool(image);
  std::vector<double> z(desc_.dim, 0.0);
  for (int i = 0; i < desc_.dim; ++i) {
    const double* row = &w_image_[static_cast<std::size_t>(i) * kPooled];
    double s = 0.0;
    for (int k = 0; k < kPooled; ++k) s += row[k] * p[k];
    z[i] = s;
  }
  return z;
}

EmbeddingVec ToyBackend::embed_image(const Image& image) const { return normalized_or_e1(project_image(image)); }

EmbeddingVec ToyBackend::embed_text(const std::string& text) const {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  std::vector<double> z(desc_.dim, 0.0);
  for (const auto& tok : toy_tokenize(text)) {
    const std::size_t bin = fnv1a64(tok) % kBins;
    const double* col = &w_text_[bin * desc_.dim];
    for (int i = 0; i < desc_.dim; ++i) z[i] += col[i];
  }
  return normalized_or_e1(std::move(z));
}

EmbeddingVec ToyBackend::embed_fused(const Image& image, const std::string& text) const {
  const auto a = embed_image(image);
  const auto b = embed_text(text);
  const double beta = desc_.fusion_weight;
  EmbeddingVec z(desc_.dim);
  for (int i = 0; i < desc_.dim; ++i) z[i] = beta * a[i] + (1.0 - beta) * b[i];
  return normalized_or_e1(std::move(z));
}

Image ToyBackend::image_cos_grad(const Image& image, const EmbeddingVec& target) const {
  if (static_cast<int>(target.size()) != desc_.dim) throw ValidationError("target dimension mismatch");
  const auto z = project_image(image);
  const double nz = norm(z);
  if (nz == 0.0) throw DegenerateInputError("cosine gradient is undefined where the image embedding is zero");
  const double nt = norm(target);
  if (nt == 0.0) throw ValidationError("target must be non-zero");
  // d cos / d z = (t - (e.t) e) / |z| with e = z/|z| and t unit.
  std::vector<double> e(desc_.dim), t(desc_.dim);
  for (int i = 0; i < desc_.dim; ++i) {
    e[i] = z[i] / nz;
    t[i] = target[i] / nt;
  }
  const double et = dot(e, t);
  std::vector<double> gz(desc_.dim);
  for (int i = 0; i < desc_.dim; ++i) gz[i] = (t[i] - et * e[i]) / nz;
  std::vector<double> gp(kPooled, 0.0);
  for (int i = 0; i < desc_.dim; ++i) {
    const double* row = &w_image_[static_cast<std::size_t>(i) * kPooled];
    for (int k = 0; k < kPooled; ++k) gp[k] += row[k] * gz[i];
  }
  std::vector<int> counts(kGrid * kGrid, 0);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      ++counts[(y * kGrid / image.height()) * kGrid + x * kGrid / image.width()];
  Image g(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    const int gy = y * kGrid / image.height();
    for (int x = 0; x < image.width(); ++x) {
      const int gx = x * kGrid / image.width();
      const double inv = 1.0 / counts[gy * kGrid + gx];
      for (int c = 0; c < 3; ++c) g.at(y, x, c) = gp[(c * kGrid + gy) * kGrid + gx] * inv;
    }
  }
  return g;
}

ExternalBackend::ExternalBackend(BackendDescriptor desc, std::shared_ptr<ProtocolClient> client)
    : desc_(std::move(desc)), client_(std::move(client)) {
  desc_.kind = BackendDescriptor::Kind::external;
  if (desc_.endpoint.empty() && client_) desc_.endpoint = client_->endpoint();
  desc_.validate();
  if (!client_) throw ValidationError("external backend requires a protocol client");
}

EmbeddingVec ExternalBackend::check_vec(const std::vector<double>& v, const char* op) const {
  if (static_cast<int>(v.size()) != desc_.dim)
    throw RuntimeError(std::string(op) + ": backend returned dim " + std::to_string(v.size()) + ", expected " +
                       std::to_string(desc_.dim));
  const double n = norm(v);
  if (!(std::abs(n - 1.0) <= 1e-3)) throw RuntimeError(std::string(op) + ": backend returned a non-unit vector");
  EmbeddingVec out(v);
  for (double& x : out) x /= n;
  return out;
}

EmbeddingVec ExternalBackend::embed_image(const Image& image) const {
  return check_vec(read_float_array(client_->call(request_embed_image(image)), "vec"), "embed_image");
}

EmbeddingVec ExternalBackend::embed_text(const std::string& text) const {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  return check_vec(read_float_array(client_->call(request_embed_text(text)), "vec"), "embed_text");
}

EmbeddingVec ExternalBackend::embed_fused(const Image& image, const std::string& text) const {
  return check_vec(read_float_array(client_->call(request_embed_fused(image, text)), "vec"), "embed_fused");
}

Image ExternalBackend::image_cos_grad(const Image& image, const EmbeddingVec& target) const {
  auto px = read_float_array(client_->call(request_image_grad(image, target)), "pixels");
  if (px.size() != image.size()) throw RuntimeError("image_grad: gradient has the wrong number of values");
  return Image(image.height(), image.width(), std::move(px));
}

std::shared_ptr<Backend> make_backend(const BackendDescriptor& desc) {
  desc.validate();
  if (desc.kind == BackendDescriptor::Kind::toy) return std::make_shared<ToyBackend>(desc);
  return std::make_shared<ExternalBackend>(desc, ProtocolClient::connect(desc.endpoint));
}

}  // namespace ragpoison
