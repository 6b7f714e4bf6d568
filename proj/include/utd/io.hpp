#pragma once

// File formats: COCO-style and CSV ground truth, JSON-lines detections and
// evaluation report serialization.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "utd/box.hpp"
#include "utd/error.hpp"
#include "utd/evaluation.hpp"
#include "utd/image.hpp"
#include "utd/postprocess.hpp"

namespace utd {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Image identifier as it appeared in the source file: numeric ids (COCO)
/// round-trip as numbers, anything else as strings.
struct ImageId {
  std::string text;
  bool numeric = false;

  static ImageId from_json(const Json& j) {
    if (j.is_number_integer()) return {std::to_string(j.get<std::int64_t>()), true};
    if (j.is_string()) return {j.get<std::string>(), false};
    throw InputError("image_id must be an integer or a string");
  }

  template <typename J>
  J to_json() const {
    if (numeric) return J(std::stoll(text));
    return J(text);
  }

  auto operator<=>(const ImageId& o) const { return text <=> o.text; }
  bool operator==(const ImageId& o) const { return text == o.text; }
};

struct ImageAnnotations {
  ImageId image_id;
  std::string file_name;
  std::string sequence;
  int width = 0;
  int height = 0;
  std::vector<LabeledBox> boxes;
};

struct GroundTruth {
  std::vector<ImageAnnotations> images;

  /// Index of the image with this id, or -1.
  int find(const std::string& id) const {
    for (std::size_t i = 0; i < images.size(); ++i)
      if (images[i].image_id.text == id) return static_cast<int>(i);
    return -1;
  }
};

enum class AnnotationFormat { auto_detect, coco_json, csv_jsonboxes };

inline AnnotationFormat parse_annotation_format(const std::string& s) {
  if (s == "auto") return AnnotationFormat::auto_detect;
  if (s == "coco_json") return AnnotationFormat::coco_json;
  if (s == "csv_jsonboxes") return AnnotationFormat::csv_jsonboxes;
  throw ConfigError("unknown annotation format '" + s + "'");
}

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline void check_unique(const GroundTruth& gt) {
  std::map<std::string, int> seen;
  for (const auto& im : gt.images)
    if (!seen.emplace(im.image_id.text, 0).second)
      throw InputError("duplicate image id '" + im.image_id.text + "'");
}

/// RFC 4180 records: quoted fields may hold commas, newlines and "" escapes.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (quoted) throw InputError("CSV: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Box checked_xywh(const Json& x, const Json& y, const Json& w, const Json& h,
                        const std::string& where) {
  if (!x.is_number() || !y.is_number() || !w.is_number() || !h.is_number())
    throw InputError(where + ": box fields must be numbers");
  const double bw = w.get<double>();
  const double bh = h.get<double>();
  if (!(bw >= 0.0) || !(bh >= 0.0)) throw InputError(where + ": negative box size");
  const Box b = Box::from_xywh(x.get<double>(), y.get<double>(), bw, bh);
  if (!b.valid()) throw InputError(where + ": box is not finite");
  return b;
}

}  // namespace detail

inline GroundTruth parse_coco_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("COCO JSON parse error: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array())
    throw InputError("COCO JSON: missing 'images' array");
  GroundTruth gt;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < doc["images"].size(); ++i) {
    const Json& im = doc["images"][i];
    const std::string where = "images[" + std::to_string(i) + "]";
    if (!im.is_object() || !im.contains("id")) throw InputError(where + ": missing 'id'");
    ImageAnnotations a;
    try {
      a.image_id = ImageId::from_json(im["id"]);
      a.file_name = im.value("file_name", std::string{});
      a.width = im.value("width", 0);
      a.height = im.value("height", 0);
      a.sequence = im.contains("sequence") ? im["sequence"].dump() : std::string{};
    } catch (const Json::exception& e) {
      throw InputError(where + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    if (!index.emplace(a.image_id.text, gt.images.size()).second)
      throw InputError(where + ": duplicate image id '" + a.image_id.text + "'");
    gt.images.push_back(std::move(a));
  }
  if (doc.contains("annotations")) {
    const Json& anns = doc["annotations"];
    if (!anns.is_array()) throw InputError("COCO JSON: 'annotations' must be an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const Json& an = anns[i];
      const std::string where = "annotations[" + std::to_string(i) + "]";
      if (!an.is_object() || !an.contains("image_id") || !an.contains("bbox"))
        throw InputError(where + ": missing 'image_id' or 'bbox'");
      const Json& bb = an["bbox"];
      if (!bb.is_array() || bb.size() != 4) throw InputError(where + ": bbox must hold 4 numbers");
      ImageId id;
      try {
        id = ImageId::from_json(an["image_id"]);
      } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
      }
      const auto it = index.find(id.text);
      if (it == index.end()) throw InputError(where + ": unknown image id '" + id.text + "'");
      const int cls = an.contains("category_id") && an["category_id"].is_number_integer()
                          ? an["category_id"].get<int>()
                          : 0;
      gt.images[it->second].boxes.push_back({detail::checked_xywh(bb[0], bb[1], bb[2], bb[3], where), cls});
    }
  }
  return gt;
}

/// CSV with one row per image and a JSON list of {x, y, width, height}
/// objects in one column. The box column is found by content (first column
/// whose values look like JSON lists); single-quoted Python-style lists are
/// accepted. The id column is "image_id" when present, else the first column.
inline GroundTruth parse_csv_jsonboxes(const std::string& text) {
  const auto rows = detail::parse_csv(text);
  if (rows.empty()) throw InputError("CSV: empty file");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return static_cast<int>(i);
    return -1;
  };
  int id_col = column("image_id");
  if (id_col < 0) id_col = 0;
  const int seq_col = column("sequence");

  int box_col = -1;
  for (std::size_t c = 0; c < header.size() && box_col < 0; ++c) {
    if (static_cast<int>(c) == id_col) continue;
    bool looks = rows.size() > 1;
    for (std::size_t r = 1; r < rows.size() && looks; ++r) {
      const std::string v = c < rows[r].size() ? detail::trim(rows[r][c]) : std::string{};
      looks = !v.empty() && v.front() == '[' && v.back() == ']';
    }
    if (looks) box_col = static_cast<int>(c);
  }
  if (box_col < 0) {
    box_col = column("annotations");
    if (box_col < 0) throw InputError("CSV: no column holds JSON box lists");
  }

  GroundTruth gt;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "CSV line record " + std::to_string(r + 1);
    if (row.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(row.size()));
    ImageAnnotations a;
    a.image_id = {detail::trim(row[static_cast<std::size_t>(id_col)]), false};
    if (a.image_id.text.empty()) throw InputError(where + ": empty image id");
    if (seq_col >= 0) a.sequence = detail::trim(row[static_cast<std::size_t>(seq_col)]);
    std::string boxes = detail::trim(row[static_cast<std::size_t>(box_col)]);
    for (auto& ch : boxes)
      if (ch == '\'') ch = '"';
    Json list;
    try {
      list = Json::parse(boxes);
    } catch (const Json::parse_error& e) {
      throw InputError(where + ": box list is not valid JSON: " + e.what());
    }
    if (!list.is_array()) throw InputError(where + ": box column is not a list");
    for (const auto& o : list) {
      if (!o.is_object() || !o.contains("x") || !o.contains("y") || !o.contains("width") ||
          !o.contains("height"))
        throw InputError(where + ": box objects need x, y, width, height");
      const int cls = o.contains("class_id") && o["class_id"].is_number_integer() ? o["class_id"].get<int>() : 0;
      a.boxes.push_back({detail::checked_xywh(o["x"], o["y"], o["width"], o["height"], where), cls});
    }
    gt.images.push_back(std::move(a));
  }
  detail::check_unique(gt);
  return gt;
}

inline GroundTruth load_annotations(const std::filesystem::path& path,
                                    AnnotationFormat format = AnnotationFormat::auto_detect) {
  const std::string text = detail::read_text_file(path);
  if (format == AnnotationFormat::auto_detect) {
    const std::string ext = path.extension().string();
    const std::string head = detail::trim(text.substr(0, 64));
    if (ext == ".json" || (!head.empty() && head.front() == '{')) {
      format = AnnotationFormat::coco_json;
    } else if (ext == ".csv" || head.find(',') != std::string::npos) {
      format = AnnotationFormat::csv_jsonboxes;
    } else {
      throw InputError("cannot detect annotation format of " + path.string());
    }
  }
  return format == AnnotationFormat::coco_json ? parse_coco_json(text) : parse_csv_jsonboxes(text);
}

/// Normalized ground truth as COCO-style JSON with corner-form boxes.
inline OrderedJson annotations_to_json(const GroundTruth& gt) {
  OrderedJson images = OrderedJson::array();
  for (const auto& im : gt.images) {
    OrderedJson boxes = OrderedJson::array();
    for (const auto& b : im.boxes)
      boxes.push_back({{"x_min", b.box.x_min}, {"y_min", b.box.y_min}, {"x_max", b.box.x_max},
                       {"y_max", b.box.y_max}, {"class_id", b.class_id}});
    OrderedJson j;
    j["image_id"] = im.image_id.to_json<OrderedJson>();
    if (!im.file_name.empty()) j["file_name"] = im.file_name;
    if (!im.sequence.empty()) j["sequence"] = im.sequence;
    j["width"] = im.width;
    j["height"] = im.height;
    j["boxes"] = std::move(boxes);
    images.push_back(std::move(j));
  }
  return OrderedJson{{"schema", "utd.annotations/1"}, {"images", std::move(images)}};
}

// ---------------------------------------------------------------------------
// Detections as JSON lines

struct PredictionRecord {
  ImageId image_id;
  Detection det;
};

inline PredictionRecord parse_detection_line(const std::string& line, std::size_t line_no) {
  const std::string where = "detections line " + std::to_string(line_no);
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw InputError(where + ": " + e.what());
  }
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
  for (const char* k : {"image_id", "x_min", "y_min", "x_max", "y_max", "score"})
    if (!j.contains(k)) throw InputError(where + ": missing '" + k + "'");
  PredictionRecord r;
  try {
    r.image_id = ImageId::from_json(j["image_id"]);
    r.det.box = {j["x_min"].get<double>(), j["y_min"].get<double>(), j["x_max"].get<double>(),
                 j["y_max"].get<double>()};
    r.det.score = j["score"].get<double>();
    r.det.class_id = j.value("class_id", 0);
  } catch (const Json::exception& e) {
    throw InputError(where + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  }
  if (!r.det.box.valid()) throw InputError(where + ": invalid box");
  if (!(r.det.score >= 0.0 && r.det.score <= 1.0)) throw InputError(where + ": score outside [0, 1]");
  if (r.det.class_id < 0) throw InputError(where + ": negative class_id");
  return r;
}

inline std::vector<PredictionRecord> parse_detections_jsonl(const std::string& text) {
  std::vector<PredictionRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_detection_line(line, n));
  }
  return out;
}

inline std::vector<PredictionRecord> read_detections_jsonl(const std::filesystem::path& path) {
  return parse_detections_jsonl(detail::read_text_file(path));
}

inline std::string detection_to_jsonl(const PredictionRecord& r) {
  OrderedJson j;
  j["image_id"] = r.image_id.to_json<OrderedJson>();
  j["x_min"] = r.det.box.x_min;
  j["y_min"] = r.det.box.y_min;
  j["x_max"] = r.det.box.x_max;
  j["y_max"] = r.det.box.y_max;
  j["score"] = r.det.score;
  j["class_id"] = r.det.class_id;
  return j.dump();
}

inline std::string detections_to_jsonl(const std::vector<PredictionRecord>& recs) {
  std::string out;
  for (const auto& r : recs) {
    out += detection_to_jsonl(r);
    out += '\n';
  }
  return out;
}

/// Groups records by image id, preserving first-appearance order of images
/// and input order within each image.
inline std::vector<std::pair<ImageId, std::vector<Detection>>> group_by_image(
    const std::vector<PredictionRecord>& recs) {
  std::vector<std::pair<ImageId, std::vector<Detection>>> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& r : recs) {
    auto [it, fresh] = index.emplace(r.image_id.text, groups.size());
    if (fresh) groups.push_back({r.image_id, {}});
    groups[it->second].second.push_back(r.det);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Evaluation against files

/// Joins predictions onto ground-truth images; a prediction naming an image
/// absent from the ground truth is an input error.
inline std::vector<ImageEval> join_for_eval(const GroundTruth& gt,
                                            const std::vector<PredictionRecord>& preds) {
  std::vector<ImageEval> images(gt.images.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < gt.images.size(); ++i) {
    index.emplace(gt.images[i].image_id.text, i);
    images[i].gts = gt.images[i].boxes;
  }
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto it = index.find(preds[k].image_id.text);
    if (it == index.end())
      throw InputError("prediction record " + std::to_string(k + 1) + " names unknown image id '" +
                       preds[k].image_id.text + "'");
    images[it->second].preds.push_back(preds[k].det);
  }
  return images;
}

inline EvalReport full_report(const std::filesystem::path& pred_file,
                              const std::filesystem::path& gt_file,
                              AnnotationFormat format = AnnotationFormat::auto_detect,
                              int max_dets = 100) {
  const GroundTruth gt = load_annotations(gt_file, format);
  const auto preds = read_detections_jsonl(pred_file);
  return evaluate_images(join_for_eval(gt, preds), max_dets);
}

inline OrderedJson report_to_json(const EvalReport& r) {
  OrderedJson j;
  j["ap"] = r.ap;
  j["ap50"] = r.ap50;
  j["ap75"] = r.ap75;
  j["ar"] = r.ar;
  j["ar_small"] = r.ar_small;
  j["ar_medium"] = r.ar_medium;
  j["ar_large"] = r.ar_large;
  OrderedJson curve = OrderedJson::array();
  const auto t = iou_thresholds();
  for (int i = 0; i < kNumIouThresholds; ++i)
    curve.push_back({{"iou_threshold", t[i]}, {"ap", r.per_threshold_ap[i]}});
  j["per_threshold_ap"] = std::move(curve);
  return j;
}

inline std::string format_report_text(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "AP      AP50    AP75    AR      ARs     ARm     ARl\n"
     << r.ap << "  " << r.ap50 << "  " << r.ap75 << "  " << r.ar << "  " << r.ar_small << "  "
     << r.ar_medium << "  " << r.ar_large << '\n';
  os << "\nIoU   AP\n";
  const auto t = iou_thresholds();
  os.precision(2);
  for (int i = 0; i < kNumIouThresholds; ++i) {
    os << t[i] << "  ";
    os.precision(4);
    os << r.per_threshold_ap[i] << '\n';
    os.precision(2);
  }
  return os.str();
}

}  // namespace utd
