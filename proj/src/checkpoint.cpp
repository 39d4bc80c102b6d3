#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"

namespace uda {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'U', 'D', 'A', 'C', 'K', 'P', 'T', '\0'};

struct Blob {
  std::string name;
  std::vector<float> data;
};

struct Container {
  json header;
  std::vector<Blob> blobs;
};

template <typename V>
void put_raw(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_container(const Container& c, const std::string& path) {
  json header = c.header;
  header["blobs"] = json::array();
  for (const auto& b : c.blobs) header["blobs"].push_back({{"name", b.name}, {"count", b.data.size()}});
  const std::string h = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  put_raw(bytes, kCheckpointVersion);
  put_raw(bytes, static_cast<std::uint64_t>(h.size()));
  bytes += h;
  for (const auto& b : c.blobs) bytes.append(reinterpret_cast<const char*>(b.data.data()), b.data.size() * sizeof(float));
  put_raw(bytes, crc32_bytes(bytes.data(), bytes.size()));
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::io, "cannot move checkpoint into place at " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::size_t fixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < fixed + sizeof(std::uint32_t) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::format, path + ": not a checkpoint file");
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - sizeof(stored_crc), sizeof(stored_crc));
  if (crc32_bytes(bytes.data(), bytes.size() - sizeof(stored_crc)) != stored_crc) {
    throw Error(ErrorKind::integrity, path + ": checksum mismatch (file is corrupted)");
  }
  std::uint32_t version;
  std::uint64_t hlen;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&hlen, bytes.data() + sizeof(kMagic) + sizeof(version), sizeof(hlen));
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::format, path + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                       std::to_string(kCheckpointVersion) + ")");
  }
  if (fixed + hlen > bytes.size() - sizeof(stored_crc)) throw Error(ErrorKind::format, path + ": truncated header");
  Container c;
  try {
    c.header = json::parse(bytes.substr(fixed, hlen));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, path + ": bad header: " + e.what());
  }
  std::size_t pos = fixed + hlen;
  for (const auto& b : c.header.at("blobs")) {
    Blob blob;
    blob.name = b.at("name").get<std::string>();
    const std::size_t n = b.at("count").get<std::size_t>();
    if (pos + n * sizeof(float) > bytes.size() - sizeof(stored_crc)) throw Error(ErrorKind::format, path + ": truncated blob " + blob.name);
    blob.data.resize(n);
    std::memcpy(blob.data.data(), bytes.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    c.blobs.push_back(std::move(blob));
  }
  if (pos != bytes.size() - sizeof(stored_crc)) throw Error(ErrorKind::format, path + ": trailing bytes");
  return c;
}

void add_params(Container& c, const std::string& prefix, const std::vector<nn::ParamRef<float>>& params) {
  for (const auto& p : params) c.blobs.push_back({prefix + p.name, {p.value.begin(), p.value.end()}});
}

void add_velocity(Container& c, const std::string& prefix, const std::vector<std::vector<float>>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) c.blobs.push_back({prefix + std::to_string(i), v[i]});
}

class BlobReader {
 public:
  BlobReader(const Container& c, std::string path) : c_(c), path_(std::move(path)) {}

  const Blob& next(const std::string& expected) {
    if (i_ >= c_.blobs.size()) throw Error(ErrorKind::format, path_ + ": missing blob " + expected);
    const Blob& b = c_.blobs[i_++];
    if (b.name != expected) throw Error(ErrorKind::format, path_ + ": expected blob " + expected + ", found " + b.name);
    return b;
  }

  void fill(const std::string& prefix, std::vector<nn::ParamRef<float>> params) {
    for (auto& p : params) {
      const Blob& b = next(prefix + p.name);
      if (b.data.size() != p.value.size()) throw Error(ErrorKind::format, path_ + ": size mismatch for " + b.name);
      std::copy(b.data.begin(), b.data.end(), p.value.begin());
    }
  }

  std::vector<std::vector<float>> velocity(const std::string& prefix, std::size_t count) {
    std::vector<std::vector<float>> v;
    for (std::size_t i = 0; i < count; ++i) v.push_back(next(prefix + std::to_string(i)).data);
    return v;
  }

  void done() const {
    if (i_ != c_.blobs.size()) throw Error(ErrorKind::format, path_ + ": unexpected extra blobs");
  }

 private:
  const Container& c_;
  std::string path_;
  std::size_t i_ = 0;
};

json style_arch_json(const StyleArch& a) {
  return {{"input_size", a.input_size}, {"encoder_channels", a.encoder_channels}, {"decoder_channels", a.decoder_channels}};
}

StyleArch style_arch_from(const json& j) {
  StyleArch a;
  a.input_size = j.at("input_size").get<int>();
  a.encoder_channels = j.at("encoder_channels").get<std::array<int, kEncoderStages>>();
  a.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  return a;
}

json optional_vec(const std::vector<std::optional<double>>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
  return a;
}

std::vector<std::optional<double>> optional_vec_from(const json& j) {
  std::vector<std::optional<double>> v;
  for (const auto& x : j) v.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return v;
}

json pseudo_json(const PseudoLabelSet& s) {
  json images = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    json labels = json::array();
    for (const auto& g : s.labels(i)) labels.push_back({g.class_id, g.box.xmin, g.box.ymin, g.box.xmax, g.box.ymax, g.score});
    images.push_back({{"id", s.image_id(i)}, {"labels", labels}});
  }
  return {{"threshold", s.threshold()}, {"checksum", s.model_checksum()}, {"created", s.created()}, {"images", images}};
}

PseudoLabelSet pseudo_from(const json& j) {
  PseudoLabelSet s(j.at("threshold").get<double>(), j.at("checksum").get<std::string>(), j.at("created").get<std::string>());
  for (const auto& img : j.at("images")) {
    std::vector<GroundTruth> labels;
    for (const auto& l : img.at("labels")) {
      GroundTruth g;
      g.class_id = l.at(0).get<int>();
      g.box = {l.at(1).get<double>(), l.at(2).get<double>(), l.at(3).get<double>(), l.at(4).get<double>()};
      g.score = l.at(5).get<double>();
      labels.push_back(g);
    }
    s.add(img.at("id").get<std::string>(), std::move(labels));
  }
  s.validate();
  return s;
}

}  // namespace

void save_checkpoint(const ExperimentState& state, const std::string& path) {
  auto& st = const_cast<ExperimentState&>(state);
  Container c;
  json& h = c.header;
  h["kind"] = "experiment";
  h["detector"] = {{"preset", state.detector.arch().name}, {"num_classes", state.detector.num_classes()}};
  h["style"] = style_arch_json(state.style.arch());
  h["step"] = state.step;
  h["iteration"] = state.iteration;
  h["step1_complete"] = state.step1_complete;
  h["step2_complete"] = state.step2_complete;
  std::ostringstream rng;
  rng << state.rng;
  h["rng"] = rng.str();
  auto opt_json = [](const nn::MomentumSgd& o) {
    return json{{"lr", o.lr()}, {"momentum", o.momentum()}, {"weight_decay", o.weight_decay()}, {"slots", o.state().size()}};
  };
  h["detector_opt"] = opt_json(state.detector_opt);
  h["style_opt"] = opt_json(state.style_opt);
  h["pseudo_path"] = state.pseudo_path;
  h["pseudo"] = state.pseudo ? pseudo_json(*state.pseudo) : json(nullptr);
  h["has_frozen"] = state.frozen.has_value();
  json metrics = json::array();
  for (const auto& e : state.metric_log) metrics.push_back({e.step, e.iteration, e.map, optional_vec(e.ap)});
  h["metric_log"] = metrics;
  json losses = json::array();
  for (const auto& e : state.loss_log) losses.push_back({e.step, e.iteration, e.total, e.st, e.cons, e.s, e.rpl});
  h["loss_log"] = losses;

  add_params(c, "det/", st.detector.params());
  add_params(c, "enc/", st.style.encoder_params_for_io());
  add_params(c, "dec/", st.style.decoder_params());
  add_velocity(c, "det_v/", state.detector_opt.state());
  add_velocity(c, "dec_v/", state.style_opt.state());
  if (state.frozen) add_params(c, "frozen/", st.frozen->params());
  write_container(c, path);
}

ExperimentState load_checkpoint(const std::string& path) {
  const Container c = read_container(path);
  const json& h = c.header;
  try {
    if (h.at("kind") != "experiment") throw Error(ErrorKind::format, path + ": not an experiment checkpoint");
    ExperimentState s;
    const DetectorArch arch =
        detector_arch_preset(h.at("detector").at("preset").get<std::string>(), h.at("detector").at("num_classes").get<int>());
    s.detector = DetectorModel(arch, 0);
    s.style = StyleTransferModel(style_arch_from(h.at("style")), 0, 0);
    s.step = h.at("step").get<int>();
    s.iteration = h.at("iteration").get<int>();
    s.step1_complete = h.at("step1_complete").get<bool>();
    s.step2_complete = h.at("step2_complete").get<bool>();
    std::istringstream rng(h.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw Error(ErrorKind::format, path + ": bad rng state");
    s.pseudo_path = h.at("pseudo_path").get<std::string>();
    if (!h.at("pseudo").is_null()) s.pseudo = std::make_shared<PseudoLabelSet>(pseudo_from(h.at("pseudo")));
    for (const auto& e : h.at("metric_log"))
      s.metric_log.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>(), optional_vec_from(e.at(3))});
    for (const auto& e : h.at("loss_log"))
      s.loss_log.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>(), e.at(3).get<double>(),
                            e.at(4).get<double>(), e.at(5).get<double>(), e.at(6).get<double>()});

    BlobReader r(c, path);
    r.fill("det/", s.detector.params());
    r.fill("enc/", s.style.encoder_params_for_io());
    r.fill("dec/", s.style.decoder_params());
    auto opt_from = [](const json& j) {
      return nn::MomentumSgd(j.at("lr").get<double>(), j.at("momentum").get<double>(), j.at("weight_decay").get<double>());
    };
    s.detector_opt = opt_from(h.at("detector_opt"));
    s.style_opt = opt_from(h.at("style_opt"));
    s.detector_opt.state() = r.velocity("det_v/", h.at("detector_opt").at("slots").get<std::size_t>());
    s.style_opt.state() = r.velocity("dec_v/", h.at("style_opt").at("slots").get<std::size_t>());
    if (h.at("has_frozen").get<bool>()) {
      s.frozen = DetectorModel(arch, 0);
      r.fill("frozen/", s.frozen->params());
    }
    r.done();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, path + ": bad header: " + e.what());
  }
}

void save_style_model(const StyleTransferModel& model, const std::string& path) {
  auto& m = const_cast<StyleTransferModel&>(model);
  Container c;
  c.header["kind"] = "style";
  c.header["style"] = style_arch_json(model.arch());
  add_params(c, "enc/", m.encoder_params_for_io());
  add_params(c, "dec/", m.decoder_params());
  write_container(c, path);
}

StyleTransferModel load_style_model(const std::string& path) {
  const Container c = read_container(path);
  try {
    if (c.header.at("kind") != "style") throw Error(ErrorKind::format, path + ": not a style checkpoint");
    StyleTransferModel m(style_arch_from(c.header.at("style")), 0, 0);
    BlobReader r(c, path);
    r.fill("enc/", m.encoder_params_for_io());
    r.fill("dec/", m.decoder_params());
    r.done();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, path + ": bad header: " + e.what());
  }
}

}  // namespace uda
