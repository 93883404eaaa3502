#include "dposelets/harness/io.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace dposelets::harness {

using json = nlohmann::json;
using poselets::AnnotatedImage;
using poselets::Corpus;
using poselets::PersonAnnotation;

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw Error(Errc::MalformedRecord, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != header.size()) throw Error(Errc::DimMismatch, "table row width differs from header");
  rows.push_back(std::move(row));
}

std::string Table::to_tsv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += '\t';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

void Table::write(const fs::path& path) const { write_file(path, to_tsv()); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::FileNotFound, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::CorruptData, "write failed for " + path.string());
}

// Manifest --------------------------------------------------------------------

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + what);
}

double number_at(const json& arr, std::size_t i, std::size_t line, const char* field) {
  if (!arr.is_array() || i >= arr.size() || !arr[i].is_number()) malformed(line, std::string("bad ") + field);
  return arr[i].get<double>();
}

}  // namespace

AnnotatedImage parse_manifest_record(std::string_view text, std::size_t line, const fs::path& base_dir,
                                     bool load_pixels) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(line, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) malformed(line, "record is not an object");
  if (!j.contains("image") || !j["image"].is_string()) malformed(line, "missing image path");
  AnnotatedImage rec;
  const std::string rel = j["image"].get<std::string>();
  rec.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : rel;
  if (j.contains("persons")) {
    if (!j["persons"].is_array()) malformed(line, "persons is not a list");
    for (const auto& p : j["persons"]) {
      PersonAnnotation person;
      person.image_id = rec.id;
      if (!p.is_object() || !p.contains("bounds")) malformed(line, "person without bounds");
      const auto& b = p["bounds"];
      if (!b.is_array() || b.size() != 4) malformed(line, "bounds must be [x, y, w, h]");
      person.bounds = {number_at(b, 0, line, "bounds"), number_at(b, 1, line, "bounds"),
                       number_at(b, 2, line, "bounds"), number_at(b, 3, line, "bounds")};
      if (p.contains("keypoints")) {
        if (!p["keypoints"].is_object()) malformed(line, "keypoints is not an object");
        for (const auto& [name, v] : p["keypoints"].items()) {
          const auto kp = poselets::parse_keypoint(name);
          if (!kp) malformed(line, "unknown keypoint '" + name + "'");
          if (!v.is_array() || v.size() < 2) malformed(line, "keypoint " + name + " must be [x, y, visible]");
          const bool vis = v.size() < 3 || (v[2].is_boolean() ? v[2].get<bool>() : number_at(v, 2, line, "visible") != 0);
          person.keypoints.push_back({*kp, number_at(v, 0, line, "keypoint"), number_at(v, 1, line, "keypoint"), vis});
        }
      }
      try {
        person.validate();
      } catch (const Error& e) {
        malformed(line, e.what());
      }
      rec.persons.push_back(std::move(person));
    }
  }
  if (load_pixels) {
    const fs::path img_path = base_dir / rel;
    if (!fs::exists(img_path)) malformed(line, "image not found: " + img_path.string());
    rec.image = imaging::load_image(img_path);
  }
  return rec;
}

Corpus read_manifest(const fs::path& path, bool load_pixels) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.push_back(parse_manifest_record(text, line, path.parent_path(), load_pixels));
  }
  return corpus;
}

void write_manifest(const Corpus& corpus, const fs::path& path, const std::string& image_dir) {
  const fs::path base = path.parent_path();
  fs::create_directories(base / image_dir);
  std::string out;
  for (const auto& img : corpus) {
    const std::string rel = image_dir + "/" + img.id + (img.image.channels() == 1 ? ".pgm" : ".ppm");
    imaging::save_pnm(img.image, base / rel);
    json j;
    j["image"] = rel;
    j["id"] = img.id;
    j["persons"] = json::array();
    for (const auto& p : img.persons) {
      json pj;
      pj["bounds"] = {p.bounds.x, p.bounds.y, p.bounds.w, p.bounds.h};
      pj["keypoints"] = json::object();
      for (const auto& k : p.keypoints) {
        pj["keypoints"][std::string(poselets::keypoint_name(k.name))] = {k.x, k.y, k.visible ? 1 : 0};
      }
      j["persons"].push_back(std::move(pj));
    }
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

// Model container -------------------------------------------------------------

namespace {

constexpr std::string_view kVersion = "DPSL1";

std::string escape(std::string_view s) {
  if (s.empty()) return "%";
  std::string out;
  for (char c : s) {
    if (c == '%' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  if (s == "%") return {};
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string_view layer_kind_name(convnet::LayerKind k) {
  switch (k) {
    case convnet::LayerKind::Convolution: return "conv";
    case convnet::LayerKind::MaxPool: return "pool";
    case convnet::LayerKind::Rectifier: return "rect";
    case convnet::LayerKind::FullyConnected: return "fc";
    case convnet::LayerKind::Softmax: return "softmax";
  }
  return "?";
}

struct BlobWriter {
  std::string payload;
  std::vector<std::string> directory;

  void add(const std::string& name, std::span<const double> values) {
    std::vector<float> f(values.begin(), values.end());
    add(name, std::span<const float>(f));
  }
  void add(const std::string& name, std::span<const float> values) {
    const std::size_t offset = payload.size();
    for (float v : values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      for (int b = 0; b < 4; ++b) payload += static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    const std::size_t len = payload.size() - offset;
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data() + offset), static_cast<uInt>(len));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    directory.push_back("blob " + escape(name) + " " + std::to_string(offset) + " " + std::to_string(len) + " " + buf);
  }
};

struct HeaderReader {
  std::vector<std::vector<std::string>> lines;
  std::size_t pos = 0;

  std::size_t line_no() const { return pos + 1; }

  const std::vector<std::string>& expect(std::string_view key, std::size_t min_fields) {
    if (pos >= lines.size()) malformed(pos + 1, "expected '" + std::string(key) + "', header ended");
    const auto& t = lines[pos];
    if (t.empty() || t[0] != key) malformed(pos + 1, "expected '" + std::string(key) + "'");
    if (t.size() < min_fields + 1) malformed(pos + 1, "too few fields for '" + std::string(key) + "'");
    ++pos;
    return t;
  }
  bool peek(std::string_view key) const { return pos < lines.size() && !lines[pos].empty() && lines[pos][0] == key; }

  double num(const std::string& s) const {
    try {
      return parse_number(s);
    } catch (const Error&) {
      malformed(pos, "bad number '" + s + "'");
    }
  }
  long long integer(const std::string& s) const {
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) malformed(pos, "bad integer '" + s + "'");
    return v;
  }
};

struct BlobEntry {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::uint32_t crc = 0;
  std::size_t line = 0;
};

}  // namespace

std::string serialize_model(const detector::PoseletModel& model) {
  std::ostringstream h;
  BlobWriter blobs;
  h << kVersion << "\n";
  h << "poselets " << model.poselets.size() << "\n";
  h << "feature_mode " << features::to_string(model.mode()) << "\n";
  const auto& hc = model.extractor.hog_config();
  h << "hog " << hc.resample_side << " " << hc.cell << " " << hc.block << " " << hc.block_stride << " "
    << hc.orientations << " " << format_number(hc.clip) << " " << format_number(hc.epsilon) << "\n";
  if (const auto& net = model.extractor.network()) {
    const auto& spec = net->spec();
    h << "network " << spec.input.c << " " << spec.input.h << " " << spec.input.w << " " << spec.pdf_layer << " "
      << spec.class_count << " " << spec.layers.size() << "\n";
    for (std::size_t k = 0; k < spec.layers.size(); ++k) {
      const auto& l = spec.layers[k];
      h << "layer " << layer_kind_name(l.kind) << " " << l.kernel << " " << l.stride << " " << l.in_channels << " "
        << l.out_channels << " " << l.inputs << " " << l.outputs << "\n";
      if (l.has_params()) {
        blobs.add("net." + std::to_string(k) + ".weights", std::span<const float>(net->params().weights[k]));
        blobs.add("net." + std::to_string(k) + ".biases", std::span<const float>(net->params().biases[k]));
      }
    }
  } else {
    h << "network none\n";
  }
  const auto& sc = model.scorer;
  h << "scorer " << (sc.mode == detector::HypothesisScorer::Mode::Sum ? "sum" : "linear") << " " << sc.weights.size()
    << "\n";
  {
    std::vector<double> v = sc.weights;
    v.push_back(sc.bias);
    blobs.add("scorer", std::span<const double>(v));
  }
  for (const auto& p : model.poselets) {
    const std::string pre = "poselet." + std::to_string(p.id);
    h << "poselet " << p.id << " " << features::to_string(p.feature_mode) << " " << p.classifier.weights.size() << " "
      << escape(p.classifier.extractor_tag) << " " << format_number(p.classifier.lambda) << "\n";
    const auto& s = p.seed;
    h << "seed " << escape(s.name) << " " << escape(s.image_id) << " " << format_number(s.window.x) << " "
      << format_number(s.window.y) << " " << format_number(s.window.w) << " " << format_number(s.window.h) << " "
      << s.keypoints.size() << "\n";
    for (const auto& k : s.keypoints) {
      h << "keypoint " << poselets::keypoint_name(k.name) << " " << format_number(k.x) << " " << format_number(k.y)
        << " " << (k.visible ? 1 : 0) << "\n";
    }
    std::vector<double> cls = p.classifier.weights;
    cls.push_back(p.classifier.bias);
    blobs.add(pre + ".classifier", std::span<const double>(cls));
    const double cal[2] = {p.calibration.a, p.calibration.b};
    blobs.add(pre + ".calibration", std::span<const double>(cal));
    const auto& v = p.vote;
    const double vote[8] = {v.dcx, v.dcy, v.dw, v.dh, v.sd_cx, v.sd_cy, v.sd_log_w, v.sd_log_h};
    blobs.add(pre + ".vote", std::span<const double>(vote));
  }
  h << "blobs " << blobs.directory.size() << "\n";
  for (const auto& d : blobs.directory) h << d << "\n";
  h << "end\n";
  return h.str() + blobs.payload;
}

detector::PoseletModel deserialize_model(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  const std::string first = bytes.substr(0, nl == std::string::npos ? bytes.size() : nl);
  if (first != kVersion) {
    throw Error(Errc::VersionMismatch, "expected format " + std::string(kVersion) + ", found '" + first.substr(0, 16) + "'");
  }
  const auto end_pos = bytes.find("\nend\n");
  if (end_pos == std::string::npos) throw Error(Errc::MalformedRecord, "header has no 'end' line");
  const std::string header = bytes.substr(0, end_pos + 1);
  const std::string_view payload = std::string_view(bytes).substr(end_pos + 5);

  HeaderReader r;
  {
    std::istringstream hs(header);
    std::string text;
    while (std::getline(hs, text)) {
      std::vector<std::string> toks;
      std::istringstream ts(text);
      for (std::string t; ts >> t;) toks.push_back(t);
      r.lines.push_back(std::move(toks));
    }
    r.lines.push_back({"end"});
  }
  r.pos = 1;

  detector::PoseletModel model;
  const auto count = r.integer(r.expect("poselets", 1)[1]);
  const std::size_t mode_line = r.line_no();
  features::FeatureMode mode;
  try {
    mode = features::parse_feature_mode(r.expect("feature_mode", 1)[1]);
  } catch (const Error&) {
    malformed(mode_line, "unknown feature mode");
  }
  const auto& hl = r.expect("hog", 7);
  features::HogConfig hc;
  hc.resample_side = static_cast<int>(r.integer(hl[1]));
  hc.cell = static_cast<int>(r.integer(hl[2]));
  hc.block = static_cast<int>(r.integer(hl[3]));
  hc.block_stride = static_cast<int>(r.integer(hl[4]));
  hc.orientations = static_cast<int>(r.integer(hl[5]));
  hc.clip = r.num(hl[6]);
  hc.epsilon = r.num(hl[7]);

  struct PendingNet {
    convnet::NetSpec spec;
  };
  std::optional<PendingNet> net;
  const auto& nl_toks = r.expect("network", 1);
  if (nl_toks[1] != "none") {
    if (nl_toks.size() < 7) malformed(r.pos, "network line needs 6 fields");
    PendingNet pn;
    pn.spec.input = {static_cast<int>(r.integer(nl_toks[1])), static_cast<int>(r.integer(nl_toks[2])),
                     static_cast<int>(r.integer(nl_toks[3]))};
    pn.spec.pdf_layer = static_cast<int>(r.integer(nl_toks[4]));
    pn.spec.class_count = static_cast<int>(r.integer(nl_toks[5]));
    const auto layers = r.integer(nl_toks[6]);
    for (long long k = 0; k < layers; ++k) {
      const auto& lt = r.expect("layer", 7);
      convnet::Layer l;
      const std::string& kind = lt[1];
      if (kind == "conv") l.kind = convnet::LayerKind::Convolution;
      else if (kind == "pool") l.kind = convnet::LayerKind::MaxPool;
      else if (kind == "rect") l.kind = convnet::LayerKind::Rectifier;
      else if (kind == "fc") l.kind = convnet::LayerKind::FullyConnected;
      else if (kind == "softmax") l.kind = convnet::LayerKind::Softmax;
      else malformed(r.pos, "unknown layer kind '" + kind + "'");
      l.kernel = static_cast<int>(r.integer(lt[2]));
      l.stride = static_cast<int>(r.integer(lt[3]));
      l.in_channels = static_cast<int>(r.integer(lt[4]));
      l.out_channels = static_cast<int>(r.integer(lt[5]));
      l.inputs = static_cast<int>(r.integer(lt[6]));
      l.outputs = static_cast<int>(r.integer(lt[7]));
      pn.spec.layers.push_back(l);
    }
    try {
      pn.spec.validate();
    } catch (const Error& e) {
      malformed(r.pos, std::string("invalid network: ") + e.what());
    }
    net = std::move(pn);
  }
  const auto& st = r.expect("scorer", 2);
  if (st[1] == "sum") model.scorer.mode = detector::HypothesisScorer::Mode::Sum;
  else if (st[1] == "linear") model.scorer.mode = detector::HypothesisScorer::Mode::Linear;
  else malformed(r.pos, "unknown scorer mode '" + st[1] + "'");
  const auto scorer_len = static_cast<std::size_t>(r.integer(st[2]));

  struct PendingPoselet {
    poselets::PoseletType p;
    std::size_t dim = 0;
  };
  std::vector<PendingPoselet> pending;
  for (long long i = 0; i < count; ++i) {
    const auto& pt = r.expect("poselet", 5);
    PendingPoselet pp;
    pp.p.id = static_cast<int>(r.integer(pt[1]));
    try {
      pp.p.feature_mode = features::parse_feature_mode(pt[2]);
    } catch (const Error&) {
      malformed(r.pos, "unknown feature mode");
    }
    pp.dim = static_cast<std::size_t>(r.integer(pt[3]));
    pp.p.classifier.extractor_tag = unescape(pt[4]);
    pp.p.classifier.lambda = r.num(pt[5]);
    const auto& sd = r.expect("seed", 7);
    pp.p.seed.name = unescape(sd[1]);
    pp.p.seed.image_id = unescape(sd[2]);
    pp.p.seed.window = {r.num(sd[3]), r.num(sd[4]), r.num(sd[5]), r.num(sd[6])};
    const auto nk = r.integer(sd[7]);
    for (long long k = 0; k < nk; ++k) {
      const auto& kt = r.expect("keypoint", 4);
      const auto name = poselets::parse_keypoint(kt[1]);
      if (!name) malformed(r.pos, "unknown keypoint '" + kt[1] + "'");
      pp.p.seed.keypoints.push_back({*name, r.num(kt[2]), r.num(kt[3]), kt[4] != "0"});
    }
    pending.push_back(std::move(pp));
  }

  std::map<std::string, BlobEntry> dir;
  const auto nblobs = r.integer(r.expect("blobs", 1)[1]);
  for (long long i = 0; i < nblobs; ++i) {
    const auto& bt = r.expect("blob", 4);
    BlobEntry e;
    e.line = r.pos;
    e.offset = static_cast<std::size_t>(r.integer(bt[2]));
    e.length = static_cast<std::size_t>(r.integer(bt[3]));
    e.crc = static_cast<std::uint32_t>(std::stoul(bt[4], nullptr, 16));
    dir[unescape(bt[1])] = e;
  }
  r.expect("end", 0);

  auto blob = [&](const std::string& name, std::size_t expected_values) {
    const auto it = dir.find(name);
    if (it == dir.end()) throw Error(Errc::MalformedRecord, "missing blob '" + name + "'");
    const auto& e = it->second;
    if (e.length != expected_values * 4) {
      malformed(e.line, "blob '" + name + "' declares " + std::to_string(e.length) + " bytes, expected " +
                            std::to_string(expected_values * 4));
    }
    if (e.offset > payload.size() || payload.size() - e.offset < e.length) {
      throw Error(Errc::ChecksumMismatch, "blob '" + name + "' is truncated");
    }
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data() + e.offset), static_cast<uInt>(e.length));
    if (crc != e.crc) throw Error(Errc::ChecksumMismatch, "blob '" + name + "' fails its checksum");
    std::vector<float> out(expected_values);
    for (std::size_t k = 0; k < expected_values; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[e.offset + 4 * k + b])) << (8 * b);
      }
      std::memcpy(&out[k], &u, 4);
    }
    return out;
  };

  if (net) {
    auto params = convnet::NetParams<float>::zeros(net->spec);
    for (std::size_t k = 0; k < net->spec.layers.size(); ++k) {
      const auto& l = net->spec.layers[k];
      if (!l.has_params()) continue;
      const auto weights = blob("net." + std::to_string(k) + ".weights", l.weight_count());
      params.weights[k].assign(weights.begin(), weights.end());
      const auto biases = blob("net." + std::to_string(k) + ".biases", l.bias_count());
      params.biases[k].assign(biases.begin(), biases.end());
    }
    model.extractor = features::Extractor::pdf(std::make_shared<convnet::PdfNetwork>(net->spec, std::move(params)));
  } else if (mode == features::FeatureMode::Pdf) {
    model.extractor = features::Extractor::pdf(nullptr);
  } else {
    model.extractor = features::Extractor::hog(hc);
  }
  if (mode == features::FeatureMode::Hog && net) {
    throw Error(Errc::MalformedRecord, "HOG model must not carry a network");
  }
  {
    const auto v = blob("scorer", scorer_len + 1);
    model.scorer.weights.assign(v.begin(), v.end() - 1);
    model.scorer.bias = v.back();
  }
  for (auto& pp : pending) {
    const std::string pre = "poselet." + std::to_string(pp.p.id);
    const auto cls = blob(pre + ".classifier", pp.dim + 1);
    pp.p.classifier.weights.assign(cls.begin(), cls.end() - 1);
    pp.p.classifier.bias = cls.back();
    const auto cal = blob(pre + ".calibration", 2);
    pp.p.calibration = {cal[0], cal[1]};
    const auto v = blob(pre + ".vote", 8);
    pp.p.vote = {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    model.poselets.push_back(std::move(pp.p));
  }
  return model;
}

void write_model(const detector::PoseletModel& model, const fs::path& path) { write_file(path, serialize_model(model)); }

detector::PoseletModel read_model(const fs::path& path) { return deserialize_model(read_file(path)); }

// Detections --------------------------------------------------------------------

void write_detections(std::ostream& os, std::span<const detector::Detection> dets) {
  os << "image_id\tx\ty\tw\th\tscore\n";
  for (const auto& d : dets) {
    os << d.image_id << '\t' << format_number(d.box.x) << '\t' << format_number(d.box.y) << '\t'
       << format_number(d.box.w) << '\t' << format_number(d.box.h) << '\t' << format_number(d.score) << '\n';
  }
}

void write_detections(const fs::path& path, std::span<const detector::Detection> dets) {
  std::ostringstream ss;
  write_detections(ss, dets);
  write_file(path, ss.str());
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto t = line.find('\t', start);
    out.push_back(line.substr(start, t == std::string::npos ? std::string::npos : t - start));
    if (t == std::string::npos) break;
    start = t + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

}  // namespace

std::vector<detector::Detection> read_detections(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::vector<detector::Detection> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (line == 1 || text.empty()) continue;
    const auto f = split_tabs(text);
    if (f.size() != 6) malformed(line, "expected 6 tab-separated fields");
    try {
      out.push_back({f[0], Box{parse_number(f[1]), parse_number(f[2]), parse_number(f[3]), parse_number(f[4])},
                     parse_number(f[5])});
    } catch (const Error& e) {
      malformed(line, e.what());
    }
  }
  return out;
}

// Patch store -------------------------------------------------------------------

std::string_view to_string(poselets::Provenance p) {
  return p == poselets::Provenance::Annotated ? "annotated" : "bootstrapped-weak";
}

void write_patch_store(const fs::path& dir, std::span<const poselets::PatchSample> samples) {
  fs::create_directories(dir / "patches");
  Table t;
  t.header = {"file", "label", "provenance", "image_id", "scale", "rotation", "tx", "ty", "residual",
              "person_x", "person_y", "person_w", "person_h"};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    char name[48];
    std::snprintf(name, sizeof name, "patches/%06zu.ppm", i);
    imaging::save_pnm(s.pixels.to_rgb(), dir / name);
    std::vector<std::string> row = {name,
                                    std::to_string(s.label),
                                    std::string(to_string(s.provenance)),
                                    escape(s.image_id),
                                    format_number(s.source.scale),
                                    format_number(s.source.rotation),
                                    format_number(s.source.tx),
                                    format_number(s.source.ty),
                                    format_number(s.residual)};
    for (double v : {s.person_bounds ? s.person_bounds->x : 0.0, s.person_bounds ? s.person_bounds->y : 0.0,
                     s.person_bounds ? s.person_bounds->w : 0.0, s.person_bounds ? s.person_bounds->h : 0.0}) {
      row.push_back(s.person_bounds ? format_number(v) : "-");
    }
    t.add(std::move(row));
  }
  t.write(dir / "index.tsv");
}

std::vector<poselets::PatchSample> read_patch_store(const fs::path& dir) {
  std::ifstream in(dir / "index.tsv");
  if (!in) throw Error(Errc::FileNotFound, (dir / "index.tsv").string());
  std::vector<poselets::PatchSample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (line == 1 || text.empty()) continue;
    const auto f = split_tabs(text);
    if (f.size() != 13) malformed(line, "expected 13 tab-separated fields");
    poselets::PatchSample s;
    try {
      s.label = std::stoi(f[1]);
      if (f[2] == "annotated") s.provenance = poselets::Provenance::Annotated;
      else if (f[2] == "bootstrapped-weak") s.provenance = poselets::Provenance::BootstrappedWeak;
      else malformed(line, "unknown provenance '" + f[2] + "'");
      s.image_id = unescape(f[3]);
      s.source = {parse_number(f[4]), parse_number(f[5]), parse_number(f[6]), parse_number(f[7])};
      s.residual = parse_number(f[8]);
      if (f[9] != "-") {
        s.person_bounds = Box{parse_number(f[9]), parse_number(f[10]), parse_number(f[11]), parse_number(f[12])};
      }
    } catch (const std::invalid_argument&) {
      malformed(line, "bad label");
    } catch (const Error& e) {
      if (e.code() == Errc::MalformedRecord && std::string(e.what()).find("line ") != std::string::npos) throw;
      malformed(line, e.what());
    }
    s.pixels = imaging::load_image(dir / f[0]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dposelets::harness
