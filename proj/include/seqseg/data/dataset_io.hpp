#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/core/mask_ops.hpp"
#include "seqseg/core/resample.hpp"
#include "seqseg/data/png.hpp"
#include "seqseg/data/shapes.hpp"

namespace seqseg::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Split name → record ids, in manifest order.
using Splits = std::map<std::string, std::vector<std::string>>;

inline std::string record_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string(), std::string("malformed json (") + e.what() + ")");
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

inline void save_record(const fs::path& dir, const std::string& id, const DatasetRecord& rec) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "annotations");
  const std::string image_rel = "images/" + id + ".png";
  write_png((dir / image_rel).string(), to_raster(rec.image));
  json ann{{"image", image_rel}, {"height", rec.image.height()}, {"width", rec.image.width()}};
  ann["instances"] = json::array();
  for (std::size_t k = 0; k < rec.instances.size(); ++k) {
    const auto& gt = rec.instances[k];
    const std::string mask_rel = "masks/" + id + "_" + std::to_string(k) + ".png";
    write_mask_png((dir / mask_rel).string(), gt.mask);
    ann["instances"].push_back({{"class_id", gt.class_id}, {"box", gt.box}, {"mask", mask_rel}});
  }
  write_text(dir / "annotations" / (id + ".json"), ann.dump(2) + "\n");
}

inline DatasetRecord load_record(const fs::path& dir, const std::string& id) {
  const fs::path ann_path = dir / "annotations" / (id + ".json");
  const json ann = read_json(ann_path);
  try {
    DatasetRecord rec;
    rec.image = to_image(read_png((dir / ann.at("image").get<std::string>()).string(), 3));
    for (const auto& inst : ann.at("instances")) {
      const fs::path mask_path = dir / inst.at("mask").get<std::string>();
      if (!fs::exists(mask_path)) throw IoError(mask_path.string(), "missing mask file");
      GroundTruthInstance gt;
      gt.mask = read_mask_png(mask_path.string());
      if (gt.mask.height != rec.image.height() || gt.mask.width != rec.image.width()) {
        throw IoError(mask_path.string(), "mask size differs from image");
      }
      if (!gt.mask.any()) throw IoError(mask_path.string(), "empty instance mask");
      gt.box = inst.at("box").get<Box>();
      gt.class_id = inst.at("class_id").get<int>();
      rec.instances.push_back(std::move(gt));
    }
    return rec;
  } catch (const json::exception& e) {
    throw IoError(ann_path.string(), std::string("bad annotation (") + e.what() + ")");
  }
}

/// Writes every record under consecutive ids and a manifest naming the splits.
/// `splits` maps split names to record indices into `records`.
inline void save_dataset(const fs::path& dir, const std::vector<DatasetRecord>& records,
                         const std::map<std::string, std::vector<std::size_t>>& splits = {},
                         const json& info = json::object()) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < records.size(); ++i) save_record(dir, record_id(i), records[i]);
  json manifest{{"records", records.size()}, {"info", info}};
  manifest["splits"] = json::object();
  for (const auto& [name, idx] : splits) {
    json ids = json::array();
    for (std::size_t i : idx) ids.push_back(record_id(i));
    manifest["splits"][name] = ids;
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Ids of all annotation files, sorted.
inline std::vector<std::string> list_records(const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError(dir.string(), "dataset directory does not exist");
  std::vector<std::string> ids;
  const fs::path ann = dir / "annotations";
  if (!fs::is_directory(ann)) return ids;
  for (const auto& entry : fs::directory_iterator(ann)) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline Splits load_manifest(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  Splits out;
  try {
    for (const auto& [name, ids] : m.at("splits").items()) out[name] = ids.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError((dir / "manifest.json").string(), std::string("bad manifest (") + e.what() + ")");
  }
  return out;
}

inline std::vector<DatasetRecord> load_records(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<DatasetRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_record(dir, id));
  return out;
}

/// Every record in the directory; an empty directory yields an empty list.
inline std::vector<DatasetRecord> load_dataset(const fs::path& dir) { return load_records(dir, list_records(dir)); }

inline std::vector<DatasetRecord> load_split(const fs::path& dir, const std::string& split) {
  const Splits splits = load_manifest(dir);
  const auto it = splits.find(split);
  if (it == splits.end()) throw IoError((dir / "manifest.json").string(), "no split named '" + split + "'");
  return load_records(dir, it->second);
}

/// Bilinear image resize, nearest mask resize, boxes recomputed; instances that vanish are dropped.
inline DatasetRecord resize_record(const DatasetRecord& rec, int height, int width, int blocks = 0) {
  const int stride = 1 << blocks;
  if (height < 1 || width < 1 || height % stride != 0 || width % stride != 0) {
    throw ShapeError("resize target " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^" + std::to_string(blocks));
  }
  DatasetRecord out;
  out.image.pixels = resize_bilinear(rec.image.pixels, height, width);
  for (const auto& gt : rec.instances) {
    GroundTruthInstance r;
    r.mask = resize_nearest(gt.mask, height, width);
    if (!r.mask.any()) continue;
    r.box = box_from_mask(r.mask);
    r.class_id = gt.class_id;
    out.instances.push_back(std::move(r));
  }
  return out;
}

}  // namespace seqseg::data
