#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "texanno/classifier.hpp"
#include "texanno/dataprep.hpp"
#include "texanno/evaluation.hpp"
#include "texanno/geometry.hpp"
#include "texanno/imaging.hpp"
#include "texanno/ranking.hpp"
#include "texanno/segmenter.hpp"

namespace texanno {

// Closed vocabulary of class names. Always contains "background".
struct Nomenclature {
  std::vector<std::string> classes;
  int version = 1;

  bool contains(const std::string& name) const;
  std::vector<std::string> forensic_classes() const;  // without background
  void validate() const;

  /// The eight collection classes plus background.
  static Nomenclature defaults();
};

struct ImageEntry {
  std::string id;  // content-derived
  std::string file;
  int width = 0;
  int height = 0;
  std::string sha256;
  std::string split;  // "train", "eval" or "" for unlabeled uploads
  std::vector<std::string> mask_classes;

  friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
};

using Geometry = std::variant<Rect, Polygon>;

Rect geometry_bounds(const Geometry& g);

enum class AnnotationOrigin { kManual, kAcceptedProposal };

struct AnnotationRecord {
  std::string id;
  std::string image_id;
  Geometry geometry;
  std::string class_name;
  std::string annotator;
  std::string created_at;
  AnnotationOrigin origin = AnnotationOrigin::kManual;
  std::optional<std::string> source_proposal;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

enum class Decision { kAccept, kDecline, kAcceptWithEdit };

struct DecisionRecord {
  std::string id;
  std::string proposal_id;
  Decision decision = Decision::kAccept;
  std::optional<Polygon> edited_geometry;
  std::string annotator;
  std::string timestamp;

  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct ModelEntry {
  std::string id;  // model version
  std::string file;
  std::vector<std::string> roster;
  std::string dataset;

  friend bool operator==(const ModelEntry&, const ModelEntry&) = default;
};

std::string_view to_string(AnnotationOrigin o);
AnnotationOrigin parse_origin(std::string_view s);
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);

// Line-record codecs. Parsing throws kValidation on malformed input.
nlohmann::json to_json(const Geometry& g);
Geometry geometry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ImageEntry& r);
ImageEntry image_entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnnotationRecord& r);
AnnotationRecord annotation_from_json(const nlohmann::json& j);
/// Scores are written rounded to 6 decimal places.
nlohmann::json to_json(const ProposedSegment& r);
ProposedSegment proposal_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DecisionRecord& r);
DecisionRecord decision_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelEntry& r);
ModelEntry model_entry_from_json(const nlohmann::json& j);

struct AnnotationFilter {
  std::optional<std::string> image_id;
  std::optional<std::string> class_name;
  std::optional<AnnotationOrigin> origin;
};

struct ProposalFilter {
  std::optional<std::string> image_id;
  std::optional<std::string> class_id;
  std::optional<ReviewStatus> status;
  std::optional<std::string> model_version;
};

struct ImageFilter {
  std::optional<std::string> split;
};

/// Write-temp-then-rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// File-backed record store. One process-level writer; any number of
/// concurrent readers within the process. All collections are held in memory
/// and each mutation atomically rewrites its collection file.
class Store {
 public:
  /// Opens an existing store or initializes an empty one with `nomenclature`
  /// (defaults when absent).
  explicit Store(std::filesystem::path root,
                 std::optional<Nomenclature> nomenclature = std::nullopt);

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const { return root_; }

  Nomenclature nomenclature() const;

  // Images. Masks are (class, 0/1 bits) at image resolution.
  ImageEntry put_image(const Raster& image, const std::string& split,
                       const std::vector<ClassMask>& masks = {});
  std::optional<ImageEntry> get_image(const std::string& id) const;
  std::vector<ImageEntry> list_images(const ImageFilter& filter = {}) const;
  Raster load_image(const std::string& id) const;
  std::vector<std::uint8_t> image_bytes(const std::string& id) const;
  std::vector<ClassMask> load_masks(const std::string& id) const;

  // Annotations. Empty id / created_at are filled in.
  AnnotationRecord put_annotation(AnnotationRecord record);
  std::vector<AnnotationRecord> put_annotations(std::vector<AnnotationRecord> records);
  std::optional<AnnotationRecord> get_annotation(const std::string& id) const;
  std::vector<AnnotationRecord> list_annotations(const AnnotationFilter& filter = {}) const;

  // Proposals. Re-putting a proposal keeps an existing review status.
  void put_proposals(const std::vector<ProposedSegment>& proposals);
  std::optional<ProposedSegment> get_proposal(const std::string& id) const;
  std::vector<ProposedSegment> list_proposals(const ProposalFilter& filter = {}) const;

  // Review. Throws kNotFound for unknown proposals and kConflict when the
  // proposal was already decided.
  AnnotationRecord accept_proposal(const std::string& proposal_id, const std::string& annotator,
                                   const std::optional<Polygon>& edited_geometry = std::nullopt);
  DecisionRecord decline_proposal(const std::string& proposal_id, const std::string& annotator);
  std::vector<DecisionRecord> list_decisions(const std::optional<std::string>& proposal_id = {}) const;

  // Models.
  ModelEntry put_model(const SoftmaxModel& model, const std::string& dataset);
  std::vector<ModelEntry> list_models() const;
  std::optional<std::string> latest_model_id() const;
  /// "latest" resolves to the most recently stored model.
  SoftmaxModel load_model(const std::string& id = "latest") const;

  // Dataset descriptors.
  void put_dataset(const std::string& name, const DatasetSplit& split);
  DatasetSplit get_dataset(const std::string& name) const;

  // Presence scores per model version.
  void put_scores(const std::string& model_version, const std::vector<ImageClassScore>& scores);
  std::optional<std::vector<ImageClassScore>> get_scores(const std::string& model_version) const;

  // Evaluation reports; the last stored one is "latest".
  void put_report(const std::string& name, const EvalReport& report);
  std::optional<EvalReport> latest_report() const;

  /// Rewrites manifest.json listing every stored file with its SHA-256.
  nlohmann::json write_manifest() const;

  /// Referential-integrity violations; empty when consistent.
  std::vector<std::string> audit() const;

  /// Corpus view for dataset preparation: images of `split` and their
  /// annotations (polygons enter as bounding rects).
  Corpus corpus(const std::string& split) const;

 private:
  void load();
  void flush_images() const;
  void flush_annotations() const;
  void flush_proposals() const;
  void flush_decisions() const;
  void flush_models() const;
  void validate_annotation(const AnnotationRecord& r) const;
  AnnotationRecord prepare_annotation(AnnotationRecord r) const;
  const ProposedSegment& undecided_proposal(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::shared_mutex mutex_;
  Nomenclature nomenclature_;
  std::vector<ImageEntry> images_;
  std::map<std::string, std::size_t> image_index_;
  std::vector<AnnotationRecord> annotations_;
  std::vector<ProposedSegment> proposals_;
  std::map<std::string, std::size_t> proposal_index_;
  std::vector<DecisionRecord> decisions_;
  std::vector<ModelEntry> models_;
};

}  // namespace texanno
