#include "ragpoison/kb.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ragpoison/error.hpp"
#include "ragpoison/hash.hpp"

namespace ragpoison {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

bool same_content(const KnowledgeEntry& a, const KnowledgeEntry& b) {
  if (a.id != b.id || a.title != b.title || a.images.size() != b.images.size() ||
      a.sections.size() != b.sections.size())
    return false;
  for (std::size_t i = 0; i < a.sections.size(); ++i)
    if (a.sections[i].section_id != b.sections[i].section_id || a.sections[i].text != b.sections[i].text)
      return false;
  for (std::size_t i = 0; i < a.images.size(); ++i)
    if (!(*a.images[i] == *b.images[i])) return false;
  return true;
}

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeEntry> entries, KbMeta meta)
    : entries_(std::move(entries)), meta_(std::move(meta)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const KnowledgeEntry& a, const KnowledgeEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (e.id.empty()) throw ValidationError("entry with empty id");
    if (i > 0 && entries_[i - 1].id == e.id) throw ValidationError("duplicate entry id: " + e.id);
    if (e.images.empty()) throw ValidationError("entry " + e.id + " has no images");
    if (e.sections.empty()) throw ValidationError("entry " + e.id + " has no sections");
    std::set<std::string> seen;
    for (auto& s : e.sections) {
      s.entry_id = e.id;
      if (s.text.empty()) throw ValidationError("entry " + e.id + " has an empty section text");
      if (!seen.insert(s.section_id).second)
        throw ValidationError("entry " + e.id + " has duplicate section id " + s.section_id);
    }
    for (const auto& img : e.images) {
      if (!img) throw ValidationError("entry " + e.id + " has a null image");
      if (img->height() != meta_.image_height || img->width() != meta_.image_width)
        throw ValidationError("entry " + e.id + " image is " + std::to_string(img->height()) + "x" +
                              std::to_string(img->width()) + ", expected " +
                              std::to_string(meta_.image_height) + "x" + std::to_string(meta_.image_width));
      if (!img->in_unit_range()) throw ValidationError("entry " + e.id + " image has pixels outside [0,1]");
    }
  }
}

const KnowledgeEntry* KnowledgeBase::find(const std::string& id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const KnowledgeEntry& e, const std::string& k) { return e.id < k; });
  return it != entries_.end() && it->id == id ? &*it : nullptr;
}

std::size_t KnowledgeBase::num_sections() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.sections.size();
  return n;
}

std::size_t KnowledgeBase::num_images() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.images.size();
  return n;
}

std::vector<std::string> KnowledgeBase::malicious_ids() const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.is_malicious) out.push_back(e.id);
  return out;
}

std::string KnowledgeBase::content_hash() const {
  Sha256 h;
  h.update_u64(static_cast<std::uint64_t>(meta_.image_height));
  h.update_u64(static_cast<std::uint64_t>(meta_.image_width));
  h.update_u64(entries_.size());
  for (const auto& e : entries_) {
    h.update_field(e.id);
    h.update_field(e.title);
    h.update_u64(e.sections.size());
    for (const auto& s : e.sections) {
      h.update_field(s.section_id);
      h.update_field(s.text);
    }
    h.update_u64(e.images.size());
    for (const auto& img : e.images)
      for (double v : img->pixels()) h.update_f64(v);
  }
  return to_hex(h.finish());
}

void validate_query(const QueryCase& q) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  if (q.id.empty()) throw ValidationError("query with empty id");
  if (q.question.empty()) throw ValidationError("query " + q.id + " has an empty question");
  if (q.target_answer.empty()) throw ValidationError("query " + q.id + " has an empty target answer");
  if (lower(q.target_answer) == lower(q.gold_answer))
    throw ValidationError("query " + q.id + ": target answer equals gold answer");
  if (q.query_image.empty()) throw ValidationError("query " + q.id + " has no image");
  if (!q.query_image.in_unit_range()) throw ValidationError("query " + q.id + " image has pixels outside [0,1]");
}

namespace {

std::string image_rel_path(const std::string& id, std::size_t n) {
  return "images/" + id + "_" + std::to_string(n) + ".png";
}

ojson entry_to_json(const KnowledgeEntry& e) {
  ojson j;
  j["id"] = e.id;
  j["title"] = e.title;
  ojson secs = ojson::array();
  for (const auto& s : e.sections) secs.push_back(ojson{{"section_id", s.section_id}, {"text", s.text}});
  j["sections"] = std::move(secs);
  ojson imgs = ojson::array();
  for (std::size_t n = 0; n < e.images.size(); ++n) imgs.push_back(image_rel_path(e.id, n));
  j["images"] = std::move(imgs);
  return j;
}

std::string get_string(const ojson& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw ValidationError(where + ": missing string field '" + key + "'");
  return it->get<std::string>();
}

KnowledgeEntry entry_from_json(const ojson& j, const fs::path& base, int height, int width,
                               const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": record is not a JSON object");
  KnowledgeEntry e;
  e.id = get_string(j, "id", where);
  e.title = j.contains("title") && j["title"].is_string() ? j["title"].get<std::string>() : "";
  if (!j.contains("sections") || !j["sections"].is_array())
    throw ValidationError(where + ": missing array field 'sections'");
  for (const auto& s : j["sections"]) {
    if (!s.is_object()) throw ValidationError(where + ": section is not an object");
    e.sections.push_back({e.id, get_string(s, "section_id", where), get_string(s, "text", where), false});
  }
  if (!j.contains("images") || !j["images"].is_array())
    throw ValidationError(where + ": missing array field 'images'");
  for (const auto& p : j["images"]) {
    if (!p.is_string()) throw ValidationError(where + ": image path is not a string");
    const fs::path path = base / p.get<std::string>();
    if (!fs::exists(path)) throw ValidationError(where + ": image file not found: " + path.string());
    auto img = std::make_shared<Image>(read_image(path));
    if (img->height() != height || img->width() != width)
      throw ValidationError(where + ": image " + path.string() + " is " + std::to_string(img->height()) + "x" +
                            std::to_string(img->width()) + ", expected " + std::to_string(height) + "x" +
                            std::to_string(width));
    if (!img->in_unit_range()) throw ValidationError(where + ": image " + path.string() + " has pixels outside [0,1]");
    e.images.push_back(std::move(img));
  }
  return e;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw RuntimeError("write failed: " + path.string());
}

ojson read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::vector<KnowledgeEntry> load_entries(const fs::path& jsonl, int height, int width) {
  if (!fs::exists(jsonl)) throw ValidationError("missing index file: " + jsonl.string());
  std::ifstream in(jsonl, std::ios::binary);
  if (!in) throw RuntimeError("cannot open " + jsonl.string());
  std::vector<KnowledgeEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = jsonl.string() + ":" + std::to_string(lineno);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(where + ": malformed record: " + ex.what());
    }
    out.push_back(entry_from_json(j, jsonl.parent_path(), height, width, where));
  }
  return out;
}

void save_entries(const std::vector<KnowledgeEntry>& entries, const fs::path& dir) {
  ensure_dir(dir / "images");
  std::string lines;
  for (const auto& e : entries) {
    lines += entry_to_json(e).dump();
    lines += '\n';
    for (std::size_t n = 0; n < e.images.size(); ++n) write_png(*e.images[n], dir / image_rel_path(e.id, n));
  }
  write_text(dir / "entries.jsonl", lines);
}

EvalManifest load_eval_manifest(const fs::path& dir) {
  EvalManifest m;
  const fs::path path = dir / "eval.json";
  if (!fs::exists(path)) return m;
  const ojson j = read_json_file(path);
  try {
    if (j.contains("malicious_ids")) m.malicious_ids = j["malicious_ids"].get<std::vector<std::string>>();
    if (j.contains("entry_classes"))
      for (const auto& [k, v] : j["entry_classes"].items()) m.entry_classes[k] = v.get<std::string>();
    if (j.contains("queries")) {
      for (const auto& q : j["queries"]) {
        QueryCase qc;
        const std::string where = path.string() + " query";
        qc.id = get_string(q, "id", where);
        qc.question = get_string(q, "question", where);
        qc.gold_answer = get_string(q, "gold_answer", where);
        qc.target_answer = get_string(q, "target_answer", where);
        qc.class_label = get_string(q, "class_label", where);
        qc.query_image = read_image(dir / get_string(q, "image", where));
        validate_query(qc);
        m.queries.push_back(std::move(qc));
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
  return m;
}

KnowledgeBase load_kb(const fs::path& dir) {
  KbMeta meta;
  if (fs::exists(dir / "kb_meta.json")) {
    const ojson j = read_json_file(dir / "kb_meta.json");
    meta.name = j.value("name", meta.name);
    meta.seed = j.value("seed", meta.seed);
    meta.image_height = j.value("image_height", meta.image_height);
    meta.image_width = j.value("image_width", meta.image_width);
  }
  auto entries = load_entries(dir / "entries.jsonl", meta.image_height, meta.image_width);
  if (fs::exists(dir / "eval.json")) {
    const ojson j = read_json_file(dir / "eval.json");
    std::set<std::string> bad;
    if (j.contains("malicious_ids")) {
      try {
        for (const auto& id : j["malicious_ids"]) bad.insert(id.get<std::string>());
      } catch (const nlohmann::json::exception& ex) {
        throw ValidationError((dir / "eval.json").string() + ": " + ex.what());
      }
    }
    for (auto& e : entries) {
      if (!bad.count(e.id)) continue;
      e.is_malicious = true;
      for (auto& s : e.sections) s.is_malicious = true;
    }
  }
  return KnowledgeBase(std::move(entries), meta);
}

void save_kb(const KnowledgeBase& kb, const fs::path& dir, const EvalManifest& extra) {
  save_entries(kb.entries(), dir);
  ojson meta;
  meta["name"] = kb.meta().name;
  meta["seed"] = kb.meta().seed;
  meta["image_height"] = kb.meta().image_height;
  meta["image_width"] = kb.meta().image_width;
  meta["size"] = kb.size();
  write_text(dir / "kb_meta.json", meta.dump(2) + "\n");

  ojson ev;
  ev["malicious_ids"] = kb.malicious_ids();
  ojson qs = ojson::array();
  if (!extra.queries.empty()) ensure_dir(dir / "queries");
  for (const auto& q : extra.queries) {
    const std::string rel = "queries/" + q.id + ".png";
    write_png(q.query_image, dir / rel);
    qs.push_back(ojson{{"id", q.id},
                       {"image", rel},
                       {"question", q.question},
                       {"gold_answer", q.gold_answer},
                       {"target_answer", q.target_answer},
                       {"class_label", q.class_label}});
  }
  ev["queries"] = std::move(qs);
  if (!extra.entry_classes.empty()) {
    ojson cls = ojson::object();
    for (const auto& [k, v] : extra.entry_classes) cls[k] = v;
    ev["entry_classes"] = std::move(cls);
  }
  write_text(dir / "eval.json", ev.dump(2) + "\n");
}

KnowledgeBase inject_entries(const KnowledgeBase& kb, std::vector<KnowledgeEntry> malicious) {
  std::set<std::string> ids;
  for (const auto& m : malicious) {
    if (kb.find(m.id) != nullptr) throw ValidationError("injected id collides with existing entry: " + m.id);
    if (!ids.insert(m.id).second) throw ValidationError("duplicate injected id: " + m.id);
  }
  std::vector<KnowledgeEntry> all = kb.entries();
  all.reserve(all.size() + malicious.size());
  for (auto& m : malicious) {
    m.is_malicious = true;
    for (auto& s : m.sections) s.is_malicious = true;
    all.push_back(std::move(m));
  }
  return KnowledgeBase(std::move(all), kb.meta());
}

}  // namespace ragpoison
