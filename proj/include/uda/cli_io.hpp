#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uda/dataset.hpp"
#include "uda/pipeline.hpp"

namespace uda {

// ---- VOC annotations and datasets

const std::vector<std::string>& voc_class_names();

struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<GroundTruth> gts;
  std::vector<std::string> warnings;  // e.g. boxes clipped to the image
};

// Class ids follow `class_names` (id k is class_names[k - 1]). Throws
// uda::Error(format) on malformed XML, a missing size or an unknown class.
VocAnnotation parse_voc_annotation(const std::string& xml_text, const std::vector<std::string>& class_names);
std::string serialize_voc_annotation(const std::vector<GroundTruth>& gts, int width, int height,
                                     const std::vector<std::string>& class_names, const std::string& filename = {});

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::optional<std::string> annotation_path;
};

// VOC layout: ImageSets/Main/<split>.txt, JPEGImages/<id>.{jpg,png},
// optional Annotations/<id>.xml.
struct DatasetManifest {
  std::string root;
  std::string split;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;  // id k is class_names[k - 1]; 0 is background
};

DatasetManifest scan_voc_dataset(const std::string& root, const std::string& split, const std::vector<std::string>& class_names);
// Images are resized to input_size x input_size. Samples without an
// annotation get an empty gt list.
Dataset load_dataset(const DatasetManifest& manifest, int input_size, std::vector<std::string>* warnings = nullptr);
// Writes PNG images, XML annotations (if `with_annotations`) and the split file.
void write_voc_dataset(const Dataset& ds, const std::string& root, const std::string& split, bool with_annotations = true);

// Toy domains for toy configs, VOC directories otherwise.
ExperimentData load_experiment_data(const TrainConfig& cfg);

// ---- Configuration

// key=value lines, '#' comments. A `preset` key (full or toy) selects the
// defaults and may appear anywhere; every other key overrides it. Unknown
// keys throw uda::Error(config).
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();
std::string format_config(const TrainConfig& cfg);

// ---- Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: magic, version, JSON header, float32 blobs, CRC32.
// Corruption raises uda::Error(integrity), a version mismatch
// uda::Error(format).
void save_checkpoint(const ExperimentState& state, const std::string& path);
ExperimentState load_checkpoint(const std::string& path);
void save_style_model(const StyleTransferModel& model, const std::string& path);
StyleTransferModel load_style_model(const std::string& path);

// ---- Sensitivity sweeps

struct SweepSpec {
  std::string parameter;  // s_pos, s_neg or lambda1..lambda4
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainConfig base = toy_config();
  std::string out_dir = "runs/sweep";
  int workers = 1;

  void validate() const;
};

// key=value file: parameter, values, seeds, workers, out and config (a base
// config path); any other key overrides the base config.
SweepSpec load_sweep_spec(const std::string& path);

struct SweepRow {
  std::string parameter;
  double value = 0;
  std::uint64_t seed = 0;
  std::optional<double> map;  // absent when the run failed
  std::string error;
};

using ExperimentRunner = std::function<ExperimentReport(const TrainConfig&)>;

// One run per (value, seed) in its own run directory; failures are recorded
// and the sweep continues. Writes <out>/<parameter>.csv and <parameter>.svg.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const ExperimentRunner& runner = {},
                                const std::function<void(const std::string&)>& log = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_svg(const std::vector<SweepRow>& rows, const std::string& parameter);

}  // namespace uda
