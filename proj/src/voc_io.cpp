#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"
#include "uda/image.hpp"
#include "uda/toy_domains.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace uda {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double pixel(const pt::ptree& box, const char* key) {
  const auto v = box.get_optional<double>(key);
  if (!v) throw Error(ErrorKind::format, std::string("VOC annotation: bndbox is missing ") + key);
  return *v;
}

}  // namespace

const std::vector<std::string>& voc_class_names() {
  static const std::vector<std::string> names{
      "aeroplane", "bicycle", "bird",  "boat",      "bottle", "bus",         "car",   "cat",  "chair", "cow",
      "diningtable", "dog",   "horse", "motorbike", "person", "pottedplant", "sheep", "sofa", "train", "tvmonitor"};
  return names;
}

VocAnnotation parse_voc_annotation(const std::string& xml_text, const std::vector<std::string>& class_names) {
  pt::ptree tree;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::format, std::string("malformed VOC annotation: ") + e.what());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw Error(ErrorKind::format, "VOC annotation: missing <annotation> root");
  VocAnnotation a;
  a.filename = root->get<std::string>("filename", "");
  const auto w = root->get_optional<int>("size.width");
  const auto h = root->get_optional<int>("size.height");
  if (!w || !h || *w <= 0 || *h <= 0) throw Error(ErrorKind::format, "VOC annotation: missing or invalid <size>");
  a.width = *w;
  a.height = *h;
  for (const auto& [tag, obj] : *root) {
    if (tag != "object") continue;
    const std::string name = obj.get<std::string>("name", "");
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw Error(ErrorKind::format, "VOC annotation: unknown class '" + name + "'");
    const auto box = obj.get_child_optional("bndbox");
    if (!box) throw Error(ErrorKind::format, "VOC annotation: object '" + name + "' has no bndbox");
    GroundTruth g;
    g.class_id = static_cast<int>(it - class_names.begin()) + 1;
    g.difficult = obj.get<int>("difficult", 0) != 0;
    const Box raw{pixel(*box, "xmin") / a.width, pixel(*box, "ymin") / a.height, pixel(*box, "xmax") / a.width,
                  pixel(*box, "ymax") / a.height};
    g.box = raw.clipped();
    if (!(g.box == raw)) a.warnings.push_back("box of '" + name + "' extends outside the image; clipped");
    a.gts.push_back(g);
  }
  return a;
}

std::string serialize_voc_annotation(const std::vector<GroundTruth>& gts, int width, int height,
                                     const std::vector<std::string>& class_names, const std::string& filename) {
  pt::ptree root;
  root.put("filename", filename);
  root.put("size.width", width);
  root.put("size.height", height);
  root.put("size.depth", 3);
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& g : gts) {
    if (g.class_id < 1 || g.class_id > static_cast<int>(class_names.size())) {
      throw Error(ErrorKind::invalid_argument, "serialize_voc_annotation: class id out of range");
    }
    pt::ptree obj;
    obj.put("name", class_names[g.class_id - 1]);
    obj.put("difficult", g.difficult ? 1 : 0);
    obj.put("bndbox.xmin", num(g.box.xmin * width));
    obj.put("bndbox.ymin", num(g.box.ymin * height));
    obj.put("bndbox.xmax", num(g.box.xmax * width));
    obj.put("bndbox.ymax", num(g.box.ymax * height));
    root.add_child("object", obj);
  }
  pt::ptree tree;
  tree.add_child("annotation", root);
  std::ostringstream out;
  pt::write_xml(out, tree, pt::xml_writer_make_settings<std::string>(' ', 2));
  return out.str();
}

DatasetManifest scan_voc_dataset(const std::string& root, const std::string& split, const std::vector<std::string>& class_names) {
  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.class_names = class_names.empty() ? voc_class_names() : class_names;
  const fs::path base(root);
  const fs::path list = base / "ImageSets" / "Main" / (split + ".txt");
  std::ifstream in(list);
  if (!in) throw Error(ErrorKind::io, "cannot read split file " + list.string());
  std::string id;
  while (in >> id) {
    ManifestEntry e;
    e.id = id;
    for (const char* ext : {".jpg", ".jpeg", ".png"}) {
      const fs::path p = base / "JPEGImages" / (id + ext);
      if (fs::exists(p)) {
        e.image_path = p.string();
        break;
      }
    }
    if (e.image_path.empty()) throw Error(ErrorKind::io, "no image for id '" + id + "' under " + (base / "JPEGImages").string());
    const fs::path ann = base / "Annotations" / (id + ".xml");
    if (fs::exists(ann)) e.annotation_path = ann.string();
    m.entries.push_back(std::move(e));
  }
  return m;
}

Dataset load_dataset(const DatasetManifest& manifest, int input_size, std::vector<std::string>* warnings) {
  Dataset ds;
  ds.name = fs::path(manifest.root).filename().string() + "/" + manifest.split;
  ds.class_names = manifest.class_names;
  for (const auto& e : manifest.entries) {
    Sample s;
    s.id = e.id;
    s.image = load_image(e.image_path, input_size);
    if (e.annotation_path) {
      VocAnnotation a = parse_voc_annotation(read_file(*e.annotation_path), manifest.class_names);
      s.gts = std::move(a.gts);
      if (warnings)
        for (auto& w : a.warnings) warnings->push_back(e.id + ": " + w);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_voc_dataset(const Dataset& ds, const std::string& root, const std::string& split, bool with_annotations) {
  const fs::path base(root);
  fs::create_directories(base / "JPEGImages");
  fs::create_directories(base / "ImageSets" / "Main");
  if (with_annotations) fs::create_directories(base / "Annotations");
  std::ofstream list(base / "ImageSets" / "Main" / (split + ".txt"));
  for (const auto& s : ds.samples) {
    save_image(s.image, (base / "JPEGImages" / (s.id + ".png")).string());
    if (with_annotations) {
      std::ofstream ann(base / "Annotations" / (s.id + ".xml"));
      ann << serialize_voc_annotation(s.gts, s.image.width(), s.image.height(), ds.class_names, s.id + ".png");
    }
    list << s.id << "\n";
  }
  if (!list) throw Error(ErrorKind::io, "cannot write dataset under " + root);
}

ExperimentData load_experiment_data(const TrainConfig& cfg) {
  ExperimentData d;
  if (cfg.dataset == "toy") {
    ToyDomains t = generate_toy_domains(cfg.seed, cfg.toy_source, cfg.toy_target, cfg.toy_test,
                                        detector_arch_preset(cfg.anchor_preset, 3).input_size);
    d.source_train = std::move(t.source_train);
    d.target_train = std::move(t.target_train);
    d.target_test = std::move(t.target_test);
    return d;
  }
  const int size = detector_arch_preset(cfg.anchor_preset, 1).input_size;
  const auto& names = cfg.class_names.empty() ? voc_class_names() : cfg.class_names;
  if (cfg.source_dir.empty() || cfg.target_dir.empty()) throw Error(ErrorKind::config, "voc datasets need source_dir and target_dir");
  d.source_train = load_dataset(scan_voc_dataset(cfg.source_dir, cfg.source_split, names), size);
  d.target_train = load_dataset(scan_voc_dataset(cfg.target_dir, cfg.target_split, names), size);
  for (auto& s : d.target_train.samples) s.gts.clear();
  d.target_test = load_dataset(scan_voc_dataset(cfg.test_dir.empty() ? cfg.target_dir : cfg.test_dir, cfg.test_split, names), size);
  return d;
}

}  // namespace uda
