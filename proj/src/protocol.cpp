#include "ragpoison/protocol.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "ragpoison/error.hpp"
#include "ragpoison/hash.hpp"

namespace ragpoison {

FdChannel::FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

FdChannel::~FdChannel() {
  close_write();
  if (read_fd_ >= 0) ::close(read_fd_);
}

void FdChannel::close_write() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (write_fd_ == read_fd_) ::shutdown(write_fd_, SHUT_WR);
  write_fd_ = -1;
}

void FdChannel::write_line(const std::string& line) {
  if (write_fd_ < 0) throw RuntimeError("protocol channel is closed for writing");
  std::string data = line;
  data += '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RuntimeError(std::string("protocol write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool FdChannel::read_line(std::string& line) {
  for (;;) {
    const auto pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RuntimeError(std::string("protocol read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (buffer_.empty()) return false;
      line = std::move(buffer_);
      buffer_.clear();
      return true;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

namespace {

std::unique_ptr<FdChannel> connect_tcp(const std::string& hostport) {
  const auto colon = hostport.rfind(':');
  if (colon == std::string::npos) throw ValidationError("tcp endpoint needs host:port: " + hostport);
  const std::string host = hostport.substr(0, colon);
  const std::string port = hostport.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw RuntimeError("cannot resolve " + hostport + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw RuntimeError("backend unreachable at tcp://" + hostport);
  return std::make_unique<FdChannel>(fd, fd);
}

std::unique_ptr<FdChannel> spawn_stdio(const std::string& command, int& pid_out) {
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw RuntimeError(std::string("pipe failed: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) throw RuntimeError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
  pid_out = pid;
  return std::make_unique<FdChannel>(from_child[0], to_child[1]);
}

}  // namespace

ProtocolClient::ProtocolClient(std::unique_ptr<LineChannel> channel, std::string endpoint)
    : channel_(std::move(channel)), endpoint_(std::move(endpoint)) {}

ProtocolClient::~ProtocolClient() {
  channel_.reset();  // closes the child's stdin so it can exit
  if (child_pid_ > 0) {
    int status = 0;
    ::waitpid(child_pid_, &status, 0);
  }
}

std::shared_ptr<ProtocolClient> ProtocolClient::connect(const std::string& endpoint) {
  // Writes to a dead peer should surface as errors, not kill the process.
  ::signal(SIGPIPE, SIG_IGN);
  if (endpoint.rfind("tcp://", 0) == 0)
    return std::make_shared<ProtocolClient>(connect_tcp(endpoint.substr(6)), endpoint);
  if (endpoint.rfind("stdio:", 0) == 0) {
    int pid = -1;
    auto ch = spawn_stdio(endpoint.substr(6), pid);
    auto client = std::make_shared<ProtocolClient>(std::move(ch), endpoint);
    client->child_pid_ = pid;
    return client;
  }
  throw ValidationError("unsupported endpoint (expected tcp://host:port or stdio:<command>): " + endpoint);
}

ojson ProtocolClient::call_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(mu_);
  channel_->write_line(line);
  std::string reply;
  if (!channel_->read_line(reply)) throw RuntimeError("backend closed the connection (" + endpoint_ + ")");
  if (observer_) observer_(line, reply);
  try {
    return ojson::parse(reply);
  } catch (const nlohmann::json::exception&) {
    throw RuntimeError("backend sent a non-JSON reply: " + reply.substr(0, 200));
  }
}

ojson ProtocolClient::call(const ojson& request) {
  ojson resp = call_line(request.dump());
  if (!resp.is_object() || !resp.contains("ok") || !resp["ok"].is_boolean())
    throw RuntimeError("backend reply lacks an 'ok' flag");
  if (!resp["ok"].get<bool>()) {
    const std::string err = resp.contains("error") && resp["error"].is_string() ? resp["error"].get<std::string>()
                                                                                  : "unspecified error";
    throw RuntimeError("backend error for op '" + request.value("op", std::string("?")) + "': " + err);
  }
  return resp;
}

ojson pixels_to_json(const Image& image) {
  ojson arr = ojson::array();
  for (double v : image.pixels()) arr.push_back(static_cast<double>(static_cast<float>(v)));
  return arr;
}

ojson request_embed_image(const Image& image) {
  return ojson{{"op", "embed_image"}, {"pixels", pixels_to_json(image)}, {"h", image.height()}, {"w", image.width()}};
}

ojson request_embed_text(const std::string& text) { return ojson{{"op", "embed_text"}, {"text", text}}; }

ojson request_embed_fused(const Image& image, const std::string& text) {
  return ojson{{"op", "embed_fused"},
               {"pixels", pixels_to_json(image)},
               {"h", image.height()},
               {"w", image.width()},
               {"text", text}};
}

ojson request_image_grad(const Image& image, const std::vector<double>& target) {
  ojson t = ojson::array();
  for (double v : target) t.push_back(static_cast<double>(static_cast<float>(v)));
  return ojson{{"op", "image_grad"},
               {"pixels", pixels_to_json(image)},
               {"h", image.height()},
               {"w", image.width()},
               {"target", std::move(t)}};
}

ojson request_generate(const Image& image, const std::string& question, const std::vector<std::string>& context,
                       const std::string& prompt) {
  return ojson{{"op", "generate"},
               {"image", ojson{{"pixels", pixels_to_json(image)}, {"h", image.height()}, {"w", image.width()}}},
               {"question", question},
               {"context", context},
               {"prompt", prompt}};
}

ojson request_rewrite(const std::string& prompt) { return ojson{{"op", "rewrite"}, {"prompt", prompt}}; }

std::vector<double> read_float_array(const ojson& obj, const std::string& key) {
  if (obj.contains(key) && obj[key].is_array()) {
    std::vector<double> out;
    out.reserve(obj[key].size());
    for (const auto& v : obj[key]) {
      if (!v.is_number()) throw RuntimeError("field '" + key + "' contains a non-number");
      out.push_back(v.get<double>());
    }
    return out;
  }
  const std::string b64 = key + "_b64";
  if (obj.contains(b64) && obj[b64].is_string()) {
    const std::string raw = base64_decode(obj[b64].get<std::string>());
    if (raw.size() % 4 != 0) throw RuntimeError("field '" + b64 + "' is not a whole number of f32 values");
    std::vector<double> out(raw.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
      float f;
      std::memcpy(&f, raw.data() + i * 4, 4);
      out[i] = f;
    }
    return out;
  }
  throw RuntimeError("missing field '" + key + "'");
}

Image image_from_request(const ojson& request) {
  const ojson& src = request.contains("image") && request["image"].is_object() ? request["image"] : request;
  if (!src.contains("h") || !src.contains("w") || !src["h"].is_number_integer() || !src["w"].is_number_integer())
    throw ValidationError("image requires integer 'h' and 'w'");
  auto px = read_float_array(src, "pixels");
  return Image(src["h"].get<int>(), src["w"].get<int>(), std::move(px));
}

std::string read_text_field(const ojson& response) {
  if (!response.contains("text") || !response["text"].is_string()) throw RuntimeError("backend reply lacks 'text'");
  return response["text"].get<std::string>();
}

}  // namespace ragpoison
