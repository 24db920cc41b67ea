#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ragpoison/image.hpp"
#include "ragpoison/vec.hpp"

namespace ragpoison {

class ProtocolClient;

struct BackendDescriptor {
  enum class Kind { toy, external };
  Kind kind = Kind::toy;
  int dim = 128;
  double fusion_weight = 0.5;  // beta, toy only
  std::uint64_t seed = 0;      // toy only
  std::string endpoint;        // external only: "tcp://host:port" or "stdio:<command>"

  void validate() const;
  /// Stable digest used to key embedding caches.
  std::string hash() const;
};

const char* to_string(BackendDescriptor::Kind kind);
BackendDescriptor::Kind parse_backend_kind(const std::string& s);

/// Embedding backend. Implementations are immutable after construction and
/// safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  int dim() const { return descriptor().dim; }

  virtual EmbeddingVec embed_image(const Image& image) const = 0;
  virtual EmbeddingVec embed_text(const std::string& text) const = 0;
  virtual EmbeddingVec embed_fused(const Image& image, const std::string& text) const = 0;
  /// Gradient of cos(embed_image(x), target) with respect to the pixels of x.
  virtual Image image_cos_grad(const Image& image, const EmbeddingVec& target) const = 0;
};

/// Built-in differentiable encoders.
///
/// Image: mean-pool each channel over an 8x8 grid of cells (cell of pixel
/// (y, x) is (y*8/H, x*8/W)), flatten channel-major to 192 values, multiply by
/// a seeded Gaussian matrix, L2-normalize. The all-zero image maps to e1.
/// Text: lowercase ASCII, split on non-alphanumerics, FNV-1a each token into
/// 2048 bins, project the count vector, L2-normalize. No tokens maps to e1.
/// Sums are accumulated in index order so results are reproducible.
class ToyBackend final : public Backend {
 public:
  static constexpr int kGrid = 8;
  static constexpr int kPooled = kGrid * kGrid * 3;
  static constexpr int kBins = 2048;

  explicit ToyBackend(BackendDescriptor desc);

  const BackendDescriptor& descriptor() const override { return desc_; }
  EmbeddingVec embed_image(const Image& image) const override;
  EmbeddingVec embed_text(const std::string& text) const override;
  EmbeddingVec embed_fused(const Image& image, const std::string& text) const override;
  /// Throws DegenerateInputError when the projected vector is zero.
  Image image_cos_grad(const Image& image, const EmbeddingVec& target) const override;

  /// Pooled 192-vector (exposed for tests).
  std::vector<double> pool(const Image& image) const;
  /// Unnormalized projection W * pool(image).
  std::vector<double> project_image(const Image& image) const;

 private:
  BackendDescriptor desc_;
  std::vector<double> w_image_;  // dim x kPooled, row-major
  std::vector<double> w_text_;   // kBins x dim, bin-major
};

/// Tokens as seen by the toy text encoder.
std::vector<std::string> toy_tokenize(const std::string& text);

/// Speaks the line protocol. Vectors are validated (dimension, unit norm
/// within 1e-3) and renormalized in double precision.
class ExternalBackend final : public Backend {
 public:
  ExternalBackend(BackendDescriptor desc, std::shared_ptr<ProtocolClient> client);

  const BackendDescriptor& descriptor() const override { return desc_; }
  EmbeddingVec embed_image(const Image& image) const override;
  EmbeddingVec embed_text(const std::string& text) const override;
  EmbeddingVec embed_fused(const Image& image, const std::string& text) const override;
  Image image_cos_grad(const Image& image, const EmbeddingVec& target) const override;

  ProtocolClient& client() const { return *client_; }

 private:
  EmbeddingVec check_vec(const std::vector<double>& v, const char* op) const;

  BackendDescriptor desc_;
  std::shared_ptr<ProtocolClient> client_;
};

std::shared_ptr<Backend> make_backend(const BackendDescriptor& desc);

}  // namespace ragpoison
