#pragma once

#include <string>
#include <vector>

#include "ragpoison/protocol.hpp"

namespace ragpoison {

struct ProbeStep {
  std::string request;
  std::string response;
  bool expect_ok = true;  // false for malformed requests
  bool passed = false;
  std::string message;
};

struct ProbeReport {
  std::vector<ProbeStep> steps;
  int dim = 0;  // embedding size seen in replies, 0 if none
  bool passed() const;
};

/// Handshake transcript: one request per op on a small fixture image, then
/// a malformed line. The image_grad target is e1 of size `dim`.
std::vector<std::string> default_probe_requests(int dim = 128);

/// Replays request lines and checks every reply: well-formed JSON with an
/// "ok" flag matching expectation, unit-norm vectors (1e-4) of one size,
/// gradient images of the request's shape, non-empty texts.
ProbeReport probe_backend(ProtocolClient& client, const std::vector<std::string>& requests);

}  // namespace ragpoison
