#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detector.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "mapper.hpp"
#include "matcher.hpp"
#include "phantom.hpp"
#include "volume.hpp"

namespace sxt {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON mappings

inline Json to_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json to_json(const GridSpec& g) {
    return Json{{"origin", to_json(g.origin)},
                {"voxel", Json::array({g.voxel_size, g.voxel_size, g.voxel_size})},
                {"dims", Json::array({g.nx, g.ny, g.nz})}};
}

inline GridSpec grid_from_json(const Json& j) {
    GridSpec g;
    g.origin = vec3_from_json(j.at("origin"));
    const Json& v = j.at("voxel");
    if (v.is_number()) {
        g.voxel_size = v.get<double>();
    } else {
        const Vec3 vx = vec3_from_json(v);
        if (std::abs(vx.x - vx.y) > 1e-12 || std::abs(vx.x - vx.z) > 1e-12)
            throw InvalidArgument("only isotropic voxels are supported");
        g.voxel_size = vx.x;
    }
    const Json& d = j.at("dims");
    g.nx = d.at(0).get<int>();
    g.ny = d.at(1).get<int>();
    g.nz = d.at(2).get<int>();
    g.validate();
    return g;
}

inline Json to_json(const ViewGeometry& v) {
    return Json{{"source", to_json(v.source)},
                {"det_center", to_json(v.det_center)},
                {"u_axis", to_json(v.u_axis)},
                {"v_axis", to_json(v.v_axis)},
                {"pitch", Json::array({v.pitch_u, v.pitch_v})},
                {"size", Json::array({v.n_u, v.n_v})}};
}

inline ViewGeometry view_from_json(const Json& j) {
    ViewGeometry v;
    v.source = vec3_from_json(j.at("source"));
    v.det_center = vec3_from_json(j.at("det_center"));
    v.u_axis = vec3_from_json(j.at("u_axis"));
    v.v_axis = vec3_from_json(j.at("v_axis"));
    v.pitch_u = j.at("pitch").at(0).get<double>();
    v.pitch_v = j.at("pitch").at(1).get<double>();
    v.n_u = j.at("size").at(0).get<int>();
    v.n_v = j.at("size").at(1).get<int>();
    v.validate();
    return v;
}

inline Json to_json(const StereoRig& rig) {
    Json views = Json::array();
    for (const auto& v : rig.views) views.push_back(to_json(v));
    return Json{{"views", views}, {"grid", to_json(rig.world_grid)}};
}

inline StereoRig rig_from_json(const Json& j) {
    StereoRig rig;
    for (const Json& v : j.at("views")) rig.views.push_back(view_from_json(v));
    rig.world_grid = grid_from_json(j.at("grid"));
    rig.validate();
    return rig;
}

inline Json to_json(const FeatureSetTruth& t) {
    Json points = Json::array(), lines = Json::array();
    for (const auto& p : t.points)
        points.push_back(Json{{"center", to_json(p.center)},
                              {"radius", p.radius},
                              {"intensity", p.intensity}});
    for (const auto& l : t.lines)
        lines.push_back(Json{{"a", to_json(l.a)},
                             {"b", to_json(l.b)},
                             {"thickness", l.thickness},
                             {"intensity", l.intensity}});
    return Json{{"points", points}, {"lines", lines}};
}

inline FeatureSetTruth truth_from_json(const Json& j) {
    FeatureSetTruth t;
    for (const Json& p : j.at("points"))
        t.points.push_back({vec3_from_json(p.at("center")), p.at("radius").get<double>(),
                            p.at("intensity").get<double>()});
    for (const Json& l : j.at("lines"))
        t.lines.push_back({vec3_from_json(l.at("a")), vec3_from_json(l.at("b")),
                           l.at("thickness").get<double>(), l.at("intensity").get<double>()});
    return t;
}

inline Json to_json(const PhantomRecipe& r) {
    return Json{{"seed", r.seed},
                {"n_shapes", r.n_shapes},
                {"n_points", r.n_points},
                {"n_lines", r.n_lines},
                {"intensity_scale", r.intensity_scale},
                {"blur_sigma", r.blur_sigma},
                {"grid", to_json(r.grid)}};
}

inline PhantomRecipe recipe_from_json(const Json& j) {
    PhantomRecipe r;
    r.seed = j.value("seed", std::uint64_t{0});
    r.n_shapes = j.value("n_shapes", r.n_shapes);
    r.n_points = j.value("n_points", r.n_points);
    r.n_lines = j.value("n_lines", r.n_lines);
    r.intensity_scale = j.value("intensity_scale", r.intensity_scale);
    r.blur_sigma = j.value("blur_sigma", r.blur_sigma);
    r.grid = grid_from_json(j.at("grid"));
    r.validate();
    return r;
}

inline Json to_json(const DetectorParams& p) {
    return Json{{"background_window", p.background_window},
                {"dot_sigmas", p.dot_sigmas},
                {"line_widths", p.line_widths},
                {"n_orientations", p.n_orientations},
                {"edge_suppression", p.edge_suppression},
                {"scale_rejection", p.scale_rejection},
                {"threshold", p.threshold},
                {"min_component_area", p.min_component_area},
                {"max_component_area", p.max_component_area},
                {"score_scale", p.score_scale}};
}

inline DetectorParams detector_params_from_json(const Json& j) {
    DetectorParams p;
    p.background_window = j.value("background_window", p.background_window);
    p.dot_sigmas = j.value("dot_sigmas", p.dot_sigmas);
    p.line_widths = j.value("line_widths", p.line_widths);
    p.n_orientations = j.value("n_orientations", p.n_orientations);
    p.edge_suppression = j.value("edge_suppression", p.edge_suppression);
    p.scale_rejection = j.value("scale_rejection", p.scale_rejection);
    p.threshold = j.value("threshold", p.threshold);
    p.min_component_area = j.value("min_component_area", p.min_component_area);
    p.max_component_area = j.value("max_component_area", p.max_component_area);
    p.score_scale = j.value("score_scale", p.score_scale);
    p.validate();
    return p;
}

inline const char* kind_name(FeatureCandidate::Kind k) {
    switch (k) {
        case FeatureCandidate::Kind::point: return "point";
        case FeatureCandidate::Kind::line_endpoint: return "line_endpoint";
        default: return "line_sample";
    }
}

inline Json to_json(const FeatureCandidate& c) {
    Json j{{"view", c.view_id},
           {"kind", kind_name(c.kind)},
           {"position", Json::array({c.position.u, c.position.v})},
           {"component", c.component_id}};
    if (c.line_axis) j["line_axis"] = *c.line_axis;
    return j;
}

inline FeatureCandidate candidate_from_json(const Json& j) {
    FeatureCandidate c;
    c.view_id = j.at("view").get<int>();
    const std::string k = j.at("kind").get<std::string>();
    c.kind = k == "point" ? FeatureCandidate::Kind::point
             : k == "line_endpoint" ? FeatureCandidate::Kind::line_endpoint
                                    : FeatureCandidate::Kind::line_sample;
    c.position = {j.at("position").at(0).get<double>(), j.at("position").at(1).get<double>()};
    c.component_id = j.at("component").get<int>();
    if (j.contains("line_axis")) c.line_axis = j.at("line_axis").get<double>();
    return c;
}

inline Json to_json(const Match& m) {
    Json entries = Json::array();
    for (const auto& e : m.entries) {
        Json je = to_json(e.candidate);
        je["occluded"] = e.occluded;
        entries.push_back(je);
    }
    return Json{{"entries", entries},
                {"epipolar_residual", m.epipolar_residual},
                {"ambiguity", m.ambiguity_flag}};
}

inline Match match_from_json(const Json& j) {
    Match m;
    for (const Json& je : j.at("entries"))
        m.entries.push_back({candidate_from_json(je), je.value("occluded", false)});
    m.epipolar_residual = j.at("epipolar_residual").get<double>();
    m.ambiguity_flag = j.value("ambiguity", false);
    return m;
}

inline Json to_json(const LineMatch& lm) {
    Json samples = Json::array();
    for (const auto& s : lm.samples)
        samples.push_back(Json{{"match", to_json(s.match)},
                               {"s_param", s.s_param},
                               {"degenerate", s.degenerate}});
    return Json{{"endpoint_a", to_json(lm.endpoint_a)},
                {"endpoint_b", to_json(lm.endpoint_b)},
                {"samples", samples},
                {"components", lm.component_ids}};
}

inline LineMatch line_match_from_json(const Json& j) {
    LineMatch lm;
    lm.endpoint_a = match_from_json(j.at("endpoint_a"));
    lm.endpoint_b = match_from_json(j.at("endpoint_b"));
    for (const Json& s : j.at("samples"))
        lm.samples.push_back({match_from_json(s.at("match")), s.at("s_param").get<double>(),
                              s.value("degenerate", false)});
    lm.component_ids = j.value("components", std::vector<int>{});
    return lm;
}

// Feature3D with both world-mm and voxel coordinates.
inline Json to_json(const Feature3D& f, const GridSpec& grid) {
    Json pos = Json::array(), vox = Json::array();
    for (const auto& p : f.positions) {
        pos.push_back(to_json(p));
        vox.push_back(to_json((p - grid.origin) / grid.voxel_size));
    }
    return Json{{"kind", f.kind == Feature3D::Kind::point ? "point" : "polyline"},
                {"positions_mm", pos},
                {"positions_voxel", vox},
                {"residual_gap_mm", f.residual_gap},
                {"source",
                 f.source == Feature3D::Source::triangulated ? "triangulated" : "volumetric"},
                {"occluded", f.occlusion_flag}};
}

inline Feature3D feature_from_json(const Json& j) {
    Feature3D f;
    f.kind = j.at("kind").get<std::string>() == "point" ? Feature3D::Kind::point
                                                        : Feature3D::Kind::polyline;
    for (const Json& p : j.at("positions_mm")) f.positions.push_back(vec3_from_json(p));
    f.residual_gap = j.value("residual_gap_mm", 0.0);
    f.source = j.value("source", std::string("triangulated")) == "volumetric"
                   ? Feature3D::Source::volumetric
                   : Feature3D::Source::triangulated;
    f.occlusion_flag = j.value("occluded", false);
    return f;
}

// ---------------------------------------------------------------------------
// file IO

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

inline void write_json_file(const std::string& path, const Json& j) {
    write_text(path, j.dump(2) + "\n");
}

inline Json read_json_file(const std::string& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw Error("bad JSON in " + path + ": " + e.what());
    }
}

inline void write_raw_f32(const std::string& path, const std::vector<float>& data) {
    static_assert(sizeof(float) == 4);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw Error("write failed: " + path);
}

inline std::vector<float> read_raw_f32(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(float))
        throw Error(path + ": expected " + std::to_string(expected_count * sizeof(float)) +
                    " bytes, got " + std::to_string(bytes));
    std::vector<float> data(expected_count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw Error("read failed: " + path);
    return data;
}

// volume: raw little-endian f32, x fastest, with a JSON sidecar
inline void save_volume(const Volume3D& vol, const std::string& raw_path,
                        const std::string& meta_path) {
    write_raw_f32(raw_path, vol.data);
    write_json_file(meta_path,
                    Json{{"dims", Json::array({vol.grid.nx, vol.grid.ny, vol.grid.nz})},
                         {"voxel_size", vol.grid.voxel_size},
                         {"origin", to_json(vol.grid.origin)},
                         {"dtype", "f32le"}});
}

inline Volume3D load_volume(const std::string& raw_path, const std::string& meta_path) {
    const Json j = read_json_file(meta_path);
    GridSpec g;
    g.nx = j.at("dims").at(0).get<int>();
    g.ny = j.at("dims").at(1).get<int>();
    g.nz = j.at("dims").at(2).get<int>();
    g.voxel_size = j.at("voxel_size").get<double>();
    g.origin = vec3_from_json(j.at("origin"));
    g.validate();
    if (j.value("dtype", "f32le") != std::string("f32le"))
        throw Error(meta_path + ": unsupported dtype");
    Volume3D vol;
    vol.grid = g;
    vol.data = read_raw_f32(raw_path, static_cast<std::size_t>(g.voxel_count()));
    return vol;
}

// projection: raw f32 plus {size, view_id} sidecar
inline void save_projection(const ProjectionImage& proj, int view_id,
                            const std::string& raw_path, const std::string& meta_path) {
    write_raw_f32(raw_path, proj.img.data);
    write_json_file(meta_path, Json{{"size", Json::array({proj.n_u(), proj.n_v()})},
                                    {"view_id", view_id},
                                    {"dtype", "f32le"}});
}

inline ImageF load_projection_image(const std::string& raw_path, const std::string& meta_path,
                                    int* view_id = nullptr) {
    const Json j = read_json_file(meta_path);
    ImageF img;
    img.n_u = j.at("size").at(0).get<int>();
    img.n_v = j.at("size").at(1).get<int>();
    if (img.n_u <= 0 || img.n_v <= 0) throw Error(meta_path + ": bad image dims");
    img.data = read_raw_f32(
        raw_path, static_cast<std::size_t>(img.n_u) * static_cast<std::size_t>(img.n_v));
    if (view_id) *view_id = j.value("view_id", 0);
    return img;
}

// ---------------------------------------------------------------------------
// netpbm

// 1-bit PBM (P4), MSB-first rows
inline void write_pbm(const std::string& path, const FeatureMask& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "P4\n" << mask.n_u << " " << mask.n_v << "\n";
    const int row_bytes = (mask.n_u + 7) / 8;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(row_bytes));
    for (int v = 0; v < mask.n_v; ++v) {
        std::fill(row.begin(), row.end(), 0);
        for (int u = 0; u < mask.n_u; ++u)
            if (mask.bit(u, v))
                row[static_cast<std::size_t>(u / 8)] |=
                    static_cast<std::uint8_t>(0x80u >> (u % 8));
        out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
    }
    if (!out) throw Error("write failed: " + path);
}

inline FeatureMask read_pbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P4") throw Error(path + ": not a P4 PBM");
    int nu = 0, nv = 0;
    in >> nu >> nv;
    in.get();  // the single whitespace after the header
    if (nu <= 0 || nv <= 0) throw Error(path + ": bad PBM dims");
    FeatureMask mask = FeatureMask::zeros(nu, nv);
    const int row_bytes = (nu + 7) / 8;
    std::vector<char> row(static_cast<std::size_t>(row_bytes));
    for (int v = 0; v < nv; ++v) {
        in.read(row.data(), row_bytes);
        if (!in) throw Error(path + ": truncated PBM");
        for (int u = 0; u < nu; ++u)
            mask.bits[mask.index(u, v)] =
                (static_cast<std::uint8_t>(row[static_cast<std::size_t>(u / 8)]) &
                 (0x80u >> (u % 8)))
                    ? 1
                    : 0;
    }
    return mask;
}

// 16-bit PGM (P5) with linear windowing; returns the window used so the
// caller can record it in a sidecar
struct PgmWindow {
    double lo = 0.0, hi = 1.0;
};

inline PgmWindow write_pgm16(const std::string& path, const ImageF& img, double lo = 0.0,
                             double hi = 0.0) {
    if (hi <= lo) {
        lo = img.data.empty() ? 0.0f : *std::min_element(img.data.begin(), img.data.end());
        hi = img.data.empty() ? 1.0f : *std::max_element(img.data.begin(), img.data.end());
        if (hi <= lo) hi = lo + 1.0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << "P5\n" << img.n_u << " " << img.n_v << "\n65535\n";
    for (float x : img.data) {
        const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        const std::uint8_t bytes[2] = {static_cast<std::uint8_t>(q >> 8),
                                       static_cast<std::uint8_t>(q & 0xff)};
        out.write(reinterpret_cast<const char*>(bytes), 2);
    }
    if (!out) throw Error("write failed: " + path);
    return {lo, hi};
}

}  // namespace sxt
