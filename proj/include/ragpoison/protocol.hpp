#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragpoison/image.hpp"

namespace ragpoison {

using ojson = nlohmann::ordered_json;

/// Bidirectional newline-delimited channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  /// Returns false on end of stream.
  virtual bool read_line(std::string& line) = 0;
};

/// Channel over a pair of file descriptors (pipes or a socket). Owns them.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(const std::string& line) override;
  bool read_line(std::string& line) override;
  void close_write();

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
};

/// Client for the external-backend protocol. One request in flight at a time;
/// calls are serialized with a mutex.
///
/// Endpoints: "tcp://host:port" connects a socket; "stdio:<command>" spawns
/// `/bin/sh -c <command>` and talks over its stdin/stdout.
class ProtocolClient {
 public:
  explicit ProtocolClient(std::unique_ptr<LineChannel> channel, std::string endpoint = "custom");
  ~ProtocolClient();

  static std::shared_ptr<ProtocolClient> connect(const std::string& endpoint);

  /// Sends one request and returns the response. Throws RuntimeError if the
  /// response is not JSON or carries ok=false.
  ojson call(const ojson& request);
  /// Sends an arbitrary line and returns the parsed response, whatever its
  /// ok flag. Throws RuntimeError if the stream ends or the reply is not JSON.
  ojson call_line(const std::string& line);

  const std::string& endpoint() const { return endpoint_; }

  /// Observer for every exchanged pair of lines (request, response).
  void set_observer(std::function<void(const std::string&, const std::string&)> fn) { observer_ = std::move(fn); }

 private:
  std::unique_ptr<LineChannel> channel_;
  std::string endpoint_;
  int child_pid_ = -1;
  std::mutex mu_;
  std::function<void(const std::string&, const std::string&)> observer_;
};

/// Request builders (field order is part of the wire format).
ojson request_embed_image(const Image& image);
ojson request_embed_text(const std::string& text);
ojson request_embed_fused(const Image& image, const std::string& text);
ojson request_image_grad(const Image& image, const std::vector<double>& target);
ojson request_generate(const Image& image, const std::string& question, const std::vector<std::string>& context,
                       const std::string& prompt);
ojson request_rewrite(const std::string& prompt);

/// Flattened (y, x, c) pixel array.
ojson pixels_to_json(const Image& image);
/// Reads "pixels" (number array) or "pixels_b64" (little-endian f32).
std::vector<double> read_float_array(const ojson& obj, const std::string& key);
Image image_from_request(const ojson& request);
std::string read_text_field(const ojson& response);

}  // namespace ragpoison
