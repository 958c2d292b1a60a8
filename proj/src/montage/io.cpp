#include "montage/io.hpp"

#include "montage/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace montage::io {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

json load_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw DataError("parse error in '" + path + "': " + e.what());
  }
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out)
    throw DataError("write failed for '" + path + "'");
}

TransformParams transform_from_json(const json &j, const std::string &context) {
  if (!j.is_object() || !j.contains("model") || !j.contains("coeffs"))
    throw DataError(context + ": transform needs 'model' and 'coeffs'");
  const auto kind = model_from_name(j.at("model").get<std::string>());
  if (!kind)
    throw DataError(context + ": unknown model '" +
                    j.at("model").get<std::string>() + "'");
  TransformParams t;
  t.kind = *kind;
  t.coeffs = j.at("coeffs").get<std::vector<double>>();
  if (t.coeffs.size() != static_cast<std::size_t>(coeffs_per_tile(*kind)))
    throw DataError(context + ": model '" + std::string(model_name(*kind)) +
                    "' needs " + std::to_string(coeffs_per_tile(*kind)) +
                    " coefficients, got " + std::to_string(t.coeffs.size()));
  return t;
}

json transform_to_json(const TransformParams &t) {
  json j;
  j["model"] = std::string(model_name(t.kind));
  j["coeffs"] = t.coeffs;
  return j;
}

} // namespace

Dataset load_dataset(const std::string &tiles_path,
                     const std::string &matches_path,
                     const std::optional<std::string> &priors_path,
                     std::vector<std::string> *warnings) {
  Dataset ds;

  const json jt = load_json(tiles_path);
  if (!jt.is_array())
    throw DataError("'" + tiles_path + "': expected a top-level array of tiles");
  std::map<std::string, std::size_t> tile_index;
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const json &rec = jt[i];
    try {
      TileSpec t;
      t.tile_id = rec.at("tile_id").get<std::string>();
      t.z = rec.at("z").get<int>();
      t.width = rec.at("width").get<double>();
      t.height = rec.at("height").get<double>();
      if (!(t.width > 0.0) || !(t.height > 0.0))
        throw DataError("tile '" + t.tile_id + "' has non-positive dimensions");
      if (!tile_index.emplace(t.tile_id, ds.tiles.size()).second)
        throw DataError("duplicate tile_id '" + t.tile_id + "'");
      ds.tiles.push_back(std::move(t));
    } catch (const json::exception &e) {
      throw DataError("'" + tiles_path + "' record " + std::to_string(i) +
                      ": " + e.what());
    }
  }

  const json jm = load_json(matches_path);
  if (!jm.is_array())
    throw DataError("'" + matches_path +
                    "': expected a top-level array of match sets");
  std::map<std::pair<std::string, std::string>, std::size_t> pair_index;
  for (std::size_t i = 0; i < jm.size(); ++i) {
    const json &rec = jm[i];
    MatchSet ms;
    try {
      ms.p_tile = rec.at("p_tile").get<std::string>();
      ms.q_tile = rec.at("q_tile").get<std::string>();
      for (const auto &pt : rec.at("p"))
        ms.p.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
      for (const auto &pt : rec.at("q"))
        ms.q.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
      if (rec.contains("w"))
        ms.w = rec.at("w").get<std::vector<double>>();
    } catch (const json::exception &e) {
      throw DataError("'" + matches_path + "' record " + std::to_string(i) +
                      ": " + e.what());
    }
    const std::string context =
        "'" + matches_path + "' record " + std::to_string(i);
    if (!tile_index.count(ms.p_tile))
      throw DataError(context + ": match references unknown tile '" +
                      ms.p_tile + "'");
    if (!tile_index.count(ms.q_tile))
      throw DataError(context + ": match references unknown tile '" +
                      ms.q_tile + "'");
    if (ms.p_tile == ms.q_tile)
      throw DataError(context + ": match connects tile '" + ms.p_tile +
                      "' to itself");
    if (ms.p.size() != ms.q.size() ||
        (!ms.w.empty() && ms.w.size() != ms.p.size()))
      throw DataError(context + ": p, q and w must have equal length");
    if (ms.p.empty())
      throw DataError(context + ": match set has no points");

    if (warnings) {
      auto check_side = [&](const std::vector<Point2> &pts,
                            const std::string &tile_id) {
        const TileSpec &tile = ds.tiles[tile_index[tile_id]];
        for (const Point2 &pt : pts) {
          if (pt.x < -tile.width || pt.x > 2.0 * tile.width ||
              pt.y < -tile.height || pt.y > 2.0 * tile.height) {
            warnings->push_back(context + ": point (" + fmt_double(pt.x) +
                                ", " + fmt_double(pt.y) +
                                ") lies far outside tile '" + tile_id + "'");
            return;
          }
        }
      };
      check_side(ms.p, ms.p_tile);
      check_side(ms.q, ms.q_tile);
    }

    const auto key = std::minmax(ms.p_tile, ms.q_tile);
    auto existing = pair_index.find({key.first, key.second});
    if (existing == pair_index.end()) {
      pair_index[{key.first, key.second}] = ds.matches.size();
      ds.matches.push_back(std::move(ms));
    } else {
      // Merge into the first orientation seen for this pair.
      MatchSet &dst = ds.matches[existing->second];
      const bool swapped = dst.p_tile != ms.p_tile;
      if (!dst.w.empty() || !ms.w.empty()) {
        if (dst.w.empty())
          dst.w.assign(dst.p.size(), 1.0);
        if (ms.w.empty())
          ms.w.assign(ms.p.size(), 1.0);
      }
      for (std::size_t j = 0; j < ms.p.size(); ++j) {
        dst.p.push_back(swapped ? ms.q[j] : ms.p[j]);
        dst.q.push_back(swapped ? ms.p[j] : ms.q[j]);
        if (!dst.w.empty())
          dst.w.push_back(ms.w[j]);
      }
    }
  }

  if (priors_path) {
    ds.priors = load_transforms(*priors_path);
    for (const auto &[id, t] : ds.priors)
      if (!tile_index.count(id))
        throw DataError("'" + *priors_path + "': prior references unknown tile '" +
                        id + "'");
  }
  return ds;
}

void save_tiles(const std::string &path, const std::vector<TileSpec> &tiles) {
  json arr = json::array();
  for (const TileSpec &t : tiles) {
    json rec;
    rec["tile_id"] = t.tile_id;
    rec["z"] = t.z;
    rec["width"] = t.width;
    rec["height"] = t.height;
    arr.push_back(std::move(rec));
  }
  write_text(path, arr.dump(2) + "\n");
}

void save_matches(const std::string &path,
                  const std::vector<MatchSet> &matches) {
  json arr = json::array();
  for (const MatchSet &ms : matches) {
    json rec;
    rec["p_tile"] = ms.p_tile;
    rec["q_tile"] = ms.q_tile;
    json jp = json::array(), jq = json::array();
    for (const Point2 &pt : ms.p)
      jp.push_back({pt.x, pt.y});
    for (const Point2 &pt : ms.q)
      jq.push_back({pt.x, pt.y});
    rec["p"] = std::move(jp);
    rec["q"] = std::move(jq);
    if (!ms.w.empty())
      rec["w"] = ms.w;
    arr.push_back(std::move(rec));
  }
  write_text(path, arr.dump(2) + "\n");
}

void save_transforms(const std::string &path,
                     const std::map<std::string, TransformParams> &transforms) {
  json obj = json::object();
  for (const auto &[id, t] : transforms)
    obj[id] = transform_to_json(t);
  write_text(path, obj.dump(2) + "\n");
}

std::map<std::string, TransformParams>
load_transforms(const std::string &path) {
  const json j = load_json(path);
  if (!j.is_object())
    throw DataError("'" + path + "': expected an object of tile_id -> transform");
  std::map<std::string, TransformParams> out;
  for (const auto &[id, rec] : j.items())
    out[id] = transform_from_json(rec, "'" + path + "' tile '" + id + "'");
  return out;
}

void write_metrics(const std::string &path, const SolveReport &report,
                   double mean_residual_px,
                   const std::map<std::string, double> &extra) {
  json j;
  j["solve_seconds"] = report.solve_seconds;
  j["assembly_seconds"] = report.assembly_seconds;
  j["mean_residual_px"] = mean_residual_px;
  j["precision"] = report.precision;
  j["nnz_a"] = report.nnz;
  j["point_matches"] = report.point_matches;
  j["iterations"] = report.iterations;
  j["status"] = report.status;
  for (const auto &[k, v] : extra)
    j[k] = v;
  write_text(path, j.dump(2) + "\n");
}

void write_sweep_csv(const std::string &path,
                     const std::vector<SweepRow> &rows) {
  std::ostringstream out;
  out << "lambda,mean_deformation_ratio,mean_residual_px,precision\n";
  for (const SweepRow &r : rows)
    out << fmt_double(r.lambda) << ',' << fmt_double(r.mean_deformation_ratio)
        << ',' << fmt_double(r.mean_residual_px) << ','
        << fmt_double(r.precision) << '\n';
  write_text(path, out.str());
}

void write_matrix_market(const std::string &path, const CsrMatrix &m) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  std::int64_t lower = 0;
  for (std::int64_t r = 0; r < m.rows; ++r)
    for (std::int64_t k = m.row_ptr[static_cast<std::size_t>(r)];
         k < m.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      if (m.col[static_cast<std::size_t>(k)] <= r)
        ++lower;
  out << m.rows << ' ' << m.cols << ' ' << lower << '\n';
  for (std::int64_t r = 0; r < m.rows; ++r)
    for (std::int64_t k = m.row_ptr[static_cast<std::size_t>(r)];
         k < m.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      const std::int64_t c = m.col[static_cast<std::size_t>(k)];
      if (c <= r)
        out << (r + 1) << ' ' << (c + 1) << ' '
            << fmt_double(m.val[static_cast<std::size_t>(k)]) << '\n';
    }
  write_text(path, out.str());
}

CsrMatrix read_matrix_market(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("%%MatrixMarket", 0) != 0)
    throw DataError("'" + path + "': not a Matrix Market file");
  const bool symmetric = line.find("symmetric") != std::string::npos;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '%')
      break;
  std::int64_t rows = 0, cols = 0, entries = 0;
  {
    std::istringstream hdr(line);
    if (!(hdr >> rows >> cols >> entries))
      throw DataError("'" + path + "': bad size line");
  }
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
  for (std::int64_t i = 0; i < entries; ++i) {
    std::int64_t r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v))
      throw DataError("'" + path + "': truncated entry list");
    trips.push_back({r - 1, c - 1, v});
    if (symmetric && r != c)
      trips.push_back({c - 1, r - 1, v});
  }
  return csr_from_triplets(rows, cols, std::move(trips));
}

void write_vector(const std::string &path, std::span<const double> v) {
  std::ostringstream out;
  for (double x : v)
    out << fmt_double(x) << '\n';
  write_text(path, out.str());
}

std::vector<double> read_vector(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::vector<double> v;
  double x = 0.0;
  while (in >> x)
    v.push_back(x);
  if (!in.eof())
    throw DataError("'" + path + "': expected one number per line");
  return v;
}

} // namespace montage::io
