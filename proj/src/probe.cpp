#include "ragpoison/probe.hpp"

#include <cmath>
#include <set>

#include "ragpoison/error.hpp"

namespace ragpoison {

bool ProbeReport::passed() const {
  if (steps.empty()) return false;
  for (const auto& s : steps)
    if (!s.passed) return false;
  return true;
}

std::vector<std::string> default_probe_requests(int dim) {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < Image::kChannels; ++c) img.at(y, x, c) = (y * 8 + x + 16 * c) / 128.0;
  std::vector<double> e1(static_cast<std::size_t>(dim), 0.0);
  if (dim > 0) e1[0] = 1.0;
  return {
      request_embed_image(img).dump(),
      request_embed_text("a small red lantern").dump(),
      request_embed_fused(img, "what is the source of this lantern?").dump(),
      request_image_grad(img, e1).dump(),
      request_generate(img, "What is the source of this lantern?", {"The source of the lantern is Fesquazor."},
                       "USER : Context : The source of the lantern is Fesquazor.\nQuestion : What is the source of "
                       "this lantern?\nThe answer is :")
          .dump(),
      request_rewrite("This is my question: What is the source of this lantern?. Please craft a paraphrased "
                      "version for the question.")
          .dump(),
      "{\"op\": \"embed_text\", \"text\": ",
  };
}

namespace {

const std::set<std::string> kOps = {"embed_image", "embed_text", "embed_fused", "image_grad", "generate", "rewrite"};

bool well_formed(const std::string& line, ojson& req) {
  try {
    req = ojson::parse(line);
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  return req.is_object() && req.contains("op") && req["op"].is_string() && kOps.count(req["op"].get<std::string>());
}

void check_reply(const ojson& req, const ojson& resp, ProbeReport& report, ProbeStep& step) {
  const std::string op = req["op"].get<std::string>();
  if (op == "embed_image" || op == "embed_text" || op == "embed_fused") {
    const auto v = read_float_array(resp, "vec");
    double n2 = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw RuntimeError("non-finite value in vec");
      n2 += x * x;
    }
    if (v.empty()) throw RuntimeError("empty vec");
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-4) throw RuntimeError("vec norm " + std::to_string(std::sqrt(n2)));
    if (report.dim == 0) report.dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != report.dim)
      throw RuntimeError("vec size " + std::to_string(v.size()) + " differs from " + std::to_string(report.dim));
  } else if (op == "image_grad") {
    const auto px = read_float_array(resp, "pixels");
    const std::size_t want = req.value("h", 0) * req.value("w", 0) * static_cast<std::size_t>(Image::kChannels);
    if (px.size() != want)
      throw RuntimeError("gradient has " + std::to_string(px.size()) + " values, expected " + std::to_string(want));
    for (double x : px)
      if (!std::isfinite(x)) throw RuntimeError("non-finite gradient value");
  } else {
    if (read_text_field(resp).empty()) throw RuntimeError("empty text");
  }
  step.message = "ok";
}

}  // namespace

ProbeReport probe_backend(ProtocolClient& client, const std::vector<std::string>& requests) {
  ProbeReport report;
  for (const auto& line : requests) {
    ProbeStep step;
    step.request = line;
    ojson req;
    step.expect_ok = well_formed(line, req);
    ojson resp;
    try {
      client.set_observer([&](const std::string&, const std::string& reply) { step.response = reply; });
      resp = client.call_line(line);
    } catch (const RuntimeError& ex) {
      step.message = ex.what();
      report.steps.push_back(std::move(step));
      break;  // the connection is unusable or desynchronized
    }
    client.set_observer(nullptr);
    if (!resp.is_object() || !resp.contains("ok") || !resp["ok"].is_boolean()) {
      step.message = "reply lacks an 'ok' flag";
    } else if (resp["ok"].get<bool>() != step.expect_ok) {
      step.message = step.expect_ok ? "expected ok:true, got error: " + resp.value("error", std::string("?"))
                                    : "expected ok:false for a malformed request";
    } else if (!step.expect_ok) {
      step.passed = true;
      step.message = "rejected as expected";
    } else {
      try {
        check_reply(req, resp, report, step);
        step.passed = true;
      } catch (const std::exception& ex) {
        step.message = ex.what();
      }
    }
    report.steps.push_back(std::move(step));
  }
  client.set_observer(nullptr);
  return report;
}

}  // namespace ragpoison
