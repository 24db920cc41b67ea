#include <fstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ragpoison/config.hpp"
#include "ragpoison/defense.hpp"
#include "ragpoison/embed.hpp"
#include "ragpoison/error.hpp"
#include "ragpoison/experiment.hpp"
#include "ragpoison/generator.hpp"
#include "ragpoison/kb.hpp"
#include "ragpoison/probe.hpp"
#include "ragpoison/protocol.hpp"
#include "ragpoison/synth.hpp"

namespace py = pybind11;
using namespace ragpoison;
using Pixels = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

Image to_image(const Pixels& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("image must have shape (H, W, 3)");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Image(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

Pixels to_array(const Image& img) {
  Pixels out({img.height(), img.width(), 3});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const EmbeddingVec& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ExperimentConfig config_from(const std::string& json_text, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg;
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("config: ") + ex.what());
  }
  apply_config_json(cfg, j);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = kToolVersion;

  py::class_<ToyBackend>(m, "ToyBackend")
      .def(py::init([](int dim, std::uint64_t seed, double fusion_weight) {
             BackendDescriptor d;
             d.dim = dim;
             d.seed = seed;
             d.fusion_weight = fusion_weight;
             d.validate();
             return ToyBackend(d);
           }),
           py::arg("dim") = 128, py::arg("seed") = 0, py::arg("fusion_weight") = 0.5)
      .def_property_readonly("dim", &ToyBackend::dim)
      .def("embed_image", [](const ToyBackend& b, const Pixels& img) { return to_array(b.embed_image(to_image(img))); })
      .def("embed_text", [](const ToyBackend& b, const std::string& t) { return to_array(b.embed_text(t)); })
      .def("embed_fused",
           [](const ToyBackend& b, const Pixels& img, const std::string& t) {
             return to_array(b.embed_fused(to_image(img), t));
           })
      .def("image_cos_grad", [](const ToyBackend& b, const Pixels& img, const std::vector<double>& target) {
        return to_array(b.image_cos_grad(to_image(img), EmbeddingVec(target.begin(), target.end())));
      });

  m.def(
      "synth_kb",
      [](const std::filesystem::path& out, int entries, int classes, int sections, std::uint64_t seed) {
        const auto r = synth_kb(entries, classes, sections, seed);
        save_kb(r.kb, out, r.manifest());
        return r.queries.size();
      },
      py::arg("out"), py::arg("entries") = 1000, py::arg("classes") = 20, py::arg("sections") = 3,
      py::arg("seed") = 1, "Writes a synthetic KB directory; returns the number of queries.");

  m.def(
      "kb_summary",
      [](const std::filesystem::path& dir) {
        const auto kb = load_kb(dir);
        py::dict d;
        d["entries"] = kb.size();
        d["malicious"] = kb.malicious_ids().size();
        d["queries"] = load_eval_manifest(dir).queries.size();
        return d;
      },
      py::arg("kb"));

  m.def(
      "inject",
      [](const std::filesystem::path& kb_dir, const std::filesystem::path& entries,
         const std::filesystem::path& out) {
        const auto kb = load_kb(kb_dir);
        const auto jsonl = std::filesystem::is_directory(entries) ? entries / "entries.jsonl" : entries;
        auto mal = load_entries(jsonl, kb.meta().image_height, kb.meta().image_width);
        const auto n = mal.size();
        save_kb(inject_entries(kb, std::move(mal)), out, load_eval_manifest(kb_dir));
        return n;
      },
      py::arg("kb"), py::arg("entries"), py::arg("out"));

  m.def(
      "dedup",
      [](const std::filesystem::path& kb_dir, const std::filesystem::path& out) {
        DedupStats st;
        save_kb(dedup_filter(load_kb(kb_dir), &st), out, load_eval_manifest(kb_dir));
        py::dict d;
        d["sections_removed"] = st.sections_removed;
        d["entries_removed"] = st.entries_removed;
        d["malicious_sections_removed"] = st.malicious_sections_removed;
        return d;
      },
      py::arg("kb"), py::arg("out"));

  m.def(
      "preprocess",
      [](const Pixels& img, std::uint64_t seed) { return to_array(preprocess_random(to_image(img), seed)); },
      py::arg("image"), py::arg("seed"));

  m.def(
      "paraphrase",
      [](const std::string& q, std::uint64_t seed) { return paraphrase_question(StubParaphraser{}, q, seed); },
      py::arg("question"), py::arg("seed") = 0);

  m.def(
      "run_experiment_json",
      [](const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
        const auto cfg = config_from(config, seed);
        EvalReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(cfg);
        }
        if (out) write_experiment_outputs(report, *out);
        return report_to_json(report).dump();
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none());

  m.def(
      "craft_attack_json",
      [](const std::string& config, const std::filesystem::path& out) {
        const auto cfg = config_from(config, std::nullopt);
        CraftOutput c;
        {
          py::gil_scoped_release release;
          c = craft_attack_for_kb(cfg);
        }
        save_entries(c.entries, out);
        std::ofstream(out / "attack_manifest.json") << manifest_records_to_json(c.manifest).dump(2) << "\n";
        return c.entries.size();
      },
      py::arg("config"), py::arg("out"));

  m.def(
      "probe",
      [](const std::string& endpoint, int dim) {
        const auto client = ProtocolClient::connect(endpoint);
        const auto r = probe_backend(*client, default_probe_requests(dim));
        py::list steps;
        for (const auto& s : r.steps) {
          py::dict d;
          d["request"] = s.request;
          d["passed"] = s.passed;
          d["message"] = s.message;
          steps.append(d);
        }
        py::dict d;
        d["passed"] = r.passed();
        d["dim"] = r.dim;
        d["steps"] = steps;
        return d;
      },
      py::arg("endpoint"), py::arg("dim") = 128);
}
