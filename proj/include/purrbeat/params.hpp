#pragma once

// Cue design space: three continuous dimensions in [0, 1] resolved into
// concrete synthesis parameters by interpolating between the LOW (0) and
// HIGH (1) endpoints of each cue.

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "purrbeat/error.hpp"

namespace purrbeat {

enum class CueKind { heartbeat, purr };

inline std::string_view to_string(CueKind kind) {
    return kind == CueKind::heartbeat ? "heartbeat" : "purr";
}

inline CueKind parse_cue_kind(std::string_view s) {
    if (s == "heartbeat") return CueKind::heartbeat;
    if (s == "purr") return CueKind::purr;
    throw ValidationError("unknown cue kind '" + std::string(s) + "'");
}

/// Amplitude, Variability and Hyper-Realism, each in [0, 1].
class CueDimensions {
public:
    constexpr CueDimensions() = default;

    CueDimensions(double amplitude, double variability, double hyper_realism)
        : amplitude_(checked("amplitude", amplitude)),
          variability_(checked("variability", variability)),
          hyper_realism_(checked("hyper_realism", hyper_realism)) {}

    constexpr double amplitude() const { return amplitude_; }
    constexpr double variability() const { return variability_; }
    constexpr double hyper_realism() const { return hyper_realism_; }

    CueDimensions with_amplitude(double v) const { return {v, variability_, hyper_realism_}; }
    CueDimensions with_variability(double v) const { return {amplitude_, v, hyper_realism_}; }
    CueDimensions with_hyper_realism(double v) const { return {amplitude_, variability_, v}; }

    friend bool operator==(const CueDimensions&, const CueDimensions&) = default;

private:
    static double checked(const char* name, double v) {
        if (!(v >= 0.0 && v <= 1.0)) {
            std::ostringstream os;
            os << name << " must be within [0, 1], got " << v;
            throw ValidationError(os.str());
        }
        return v;
    }

    double amplitude_ = 0.0;
    double variability_ = 0.0;
    double hyper_realism_ = 0.0;
};

/// Endpoint constants of the design space.
namespace endpoints {
inline constexpr double kGainLow = 0.66;
inline constexpr double kHeartbeatGainHigh = 0.75;
inline constexpr double kPurrGainHigh = 0.70;

inline constexpr double kHeartbeatBaseBpm = 55.0;
inline constexpr double kPurrBasePpm = 70.0;
inline constexpr double kRateModDepthHigh = 0.25;
inline constexpr double kRateModPeriodS = 30.0;

inline constexpr double kHeartbeatAmpLow = 0.75;
inline constexpr double kPurrAmpLow = 0.80;
inline constexpr double kAmpHigh = 1.0;

inline constexpr double kHeartbeatBoostDb = 9.0;
inline constexpr double kPurrBoostDb = 10.5;
inline constexpr double kBoostCenterHz = 45.0;
}  // namespace endpoints

struct ResolvedCueParams {
    CueKind kind = CueKind::heartbeat;
    double master_gain = 0.0;      // fraction of actuator full scale
    double base_rate = 0.0;        // bpm or ppm
    double rate_mod_depth = 0.0;   // fraction of base_rate
    double rate_mod_period = endpoints::kRateModPeriodS;
    double event_amp_min = 0.0;    // per-beat draw range (heartbeat) or V(t) range (purr)
    double event_amp_max = 0.0;
    double boost_gain_db = 0.0;    // peaking boost at 45 Hz

    friend bool operator==(const ResolvedCueParams&, const ResolvedCueParams&) = default;
};

inline double lerp_endpoint(double low, double high, double x) { return low + (high - low) * x; }

inline ResolvedCueParams resolve(const CueDimensions& dims, CueKind kind) {
    using namespace endpoints;
    const bool hb = kind == CueKind::heartbeat;
    ResolvedCueParams p;
    p.kind = kind;
    p.master_gain = lerp_endpoint(kGainLow, hb ? kHeartbeatGainHigh : kPurrGainHigh, dims.amplitude());
    p.base_rate = hb ? kHeartbeatBaseBpm : kPurrBasePpm;
    p.rate_mod_depth = lerp_endpoint(0.0, kRateModDepthHigh, dims.variability());
    p.rate_mod_period = kRateModPeriodS;
    p.event_amp_min = hb ? kHeartbeatAmpLow : kPurrAmpLow;
    p.event_amp_max = lerp_endpoint(p.event_amp_min, kAmpHigh, dims.variability());
    p.boost_gain_db = lerp_endpoint(0.0, hb ? kHeartbeatBoostDb : kPurrBoostDb, dims.hyper_realism());
    return p;
}

// ---------------------------------------------------------------------------
// Presets

struct CuePreset {
    int id = 0;
    CueDimensions dims;
    std::string rating;              // life-likeness rating column
    std::string lifelikeness_label;  // general perception
    std::string description;
    bool no_vibration = false;       // baseline setting: output muted

    friend bool operator==(const CuePreset&, const CuePreset&) = default;
};

/// The eight standard settings, ordered by id.
inline const std::vector<CuePreset>& preset_table() {
    static const std::vector<CuePreset> table = {
        {1, {0, 0, 0}, "Baseline", "No vibration (baseline)",
         "Comfortable but with no sense of internal activity.", true},
        {2, {1, 1, 0}, "Low", "Low realism",
         "Inconsistent texture that reads as electronic.", false},
        {3, {1, 0, 1}, "Low", "Least life-like",
         "Intense, mechanical and attention-grabbing.", false},
        {4, {0, 1, 0}, "High", "Most life-like",
         "Soft internal pulse; the reference for the final cues.", false},
        {5, {0, 1, 1}, "Medium-High", "Mixed-positive",
         "Realistic pattern, slightly too strong; suggests a larger animal.", false},
        {6, {0, 0, 1}, "Medium", "Mixed-positive",
         "Smooth but buzzy; more of a general vibration than a pulse.", false},
        {7, {1, 1, 1}, "Low", "Least life-like",
         "Coarse and exaggerated.", false},
        {8, {1, 0, 0}, "Low-Medium", "Weak but soft",
         "Subtle, often too faint to notice during movement.", false},
    };
    return table;
}

inline const CuePreset& find_preset(int id) {
    for (const auto& p : preset_table())
        if (p.id == id) return p;
    throw ValidationError("no preset with id " + std::to_string(id));
}

/// Resolves a preset for one cue. The baseline preset forces the gain to 0.
inline ResolvedCueParams resolve(const CuePreset& preset, CueKind kind) {
    auto p = resolve(preset.dims, kind);
    if (preset.no_vibration) p.master_gain = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::json to_json(const CueDimensions& d) {
    return {{"amplitude", d.amplitude()},
            {"variability", d.variability()},
            {"hyper_realism", d.hyper_realism()}};
}

inline double json_unit(const nlohmann::json& j, const char* key, std::optional<double> fallback) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw ValidationError(std::string("missing field '") + key + "'");
    }
    if (!j.at(key).is_number())
        throw ValidationError(std::string("field '") + key + "' must be a number");
    return j.at(key).get<double>();
}

/// Parses dimensions; missing fields come from `base` when given.
inline CueDimensions dims_from_json(const nlohmann::json& j,
                                    const std::optional<CueDimensions>& base = std::nullopt) {
    if (!j.is_object()) throw ValidationError("dims must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "amplitude" && key != "variability" && key != "hyper_realism")
            throw ValidationError("unknown dims field '" + key + "'");
    auto fb = [&](double v) { return base ? std::optional<double>(v) : std::nullopt; };
    return CueDimensions(json_unit(j, "amplitude", fb(base ? base->amplitude() : 0.0)),
                         json_unit(j, "variability", fb(base ? base->variability() : 0.0)),
                         json_unit(j, "hyper_realism", fb(base ? base->hyper_realism() : 0.0)));
}

inline nlohmann::json to_json(const ResolvedCueParams& p) {
    return {{"kind", std::string(to_string(p.kind))},
            {"master_gain", p.master_gain},
            {"base_rate", p.base_rate},
            {"rate_mod_depth", p.rate_mod_depth},
            {"rate_mod_period", p.rate_mod_period},
            {"event_amp_min", p.event_amp_min},
            {"event_amp_max", p.event_amp_max},
            {"boost_gain_db", p.boost_gain_db}};
}

inline ResolvedCueParams params_from_json(const nlohmann::json& j) {
    ResolvedCueParams p;
    p.kind = parse_cue_kind(j.at("kind").get<std::string>());
    p.master_gain = j.at("master_gain").get<double>();
    p.base_rate = j.at("base_rate").get<double>();
    p.rate_mod_depth = j.at("rate_mod_depth").get<double>();
    p.rate_mod_period = j.at("rate_mod_period").get<double>();
    p.event_amp_min = j.at("event_amp_min").get<double>();
    p.event_amp_max = j.at("event_amp_max").get<double>();
    p.boost_gain_db = j.at("boost_gain_db").get<double>();
    if (!(p.base_rate > 0) || !(p.rate_mod_depth >= 0 && p.rate_mod_depth < 1) ||
        !(p.event_amp_min <= p.event_amp_max) || !(p.master_gain >= 0 && p.master_gain <= 1) ||
        !(p.rate_mod_period > 0) || !(p.boost_gain_db >= 0))
        throw ValidationError("resolved parameters violate their invariants");
    return p;
}

inline nlohmann::json to_json(const CuePreset& p) {
    return {{"id", p.id},
            {"amplitude", p.dims.amplitude()},
            {"variability", p.dims.variability()},
            {"hyper_realism", p.dims.hyper_realism()},
            {"rating", p.rating},
            {"label", p.lifelikeness_label},
            {"description", p.description},
            {"no_vibration", p.no_vibration}};
}

/// Preset file: a JSON array with one record per preset.
inline std::string presets_to_text(const std::vector<CuePreset>& presets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : presets) arr.push_back(to_json(p));
    return arr.dump(2) + "\n";
}

inline std::vector<CuePreset> presets_from_text(const std::string& text) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("preset file: ") + e.what(), e.byte);
    }
    if (!arr.is_array()) throw ValidationError("preset file must hold an array");
    std::vector<CuePreset> out;
    std::set<int> ids;
    for (const auto& r : arr) {
        CuePreset p;
        p.id = r.at("id").get<int>();
        if (!ids.insert(p.id).second)
            throw ValidationError("duplicate preset id " + std::to_string(p.id));
        p.dims = CueDimensions(json_unit(r, "amplitude", std::nullopt),
                               json_unit(r, "variability", std::nullopt),
                               json_unit(r, "hyper_realism", std::nullopt));
        p.lifelikeness_label = r.at("label").get<std::string>();
        p.rating = r.value("rating", std::string{});
        p.description = r.value("description", std::string{});
        p.no_vibration = r.value("no_vibration", false);
        out.push_back(std::move(p));
    }
    return out;
}

inline void save_presets(const std::string& path, const std::vector<CuePreset>& presets) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << presets_to_text(presets);
    if (!f) throw IoError("write to '" + path + "' failed");
}

inline std::vector<CuePreset> load_presets(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return presets_from_text(ss.str());
}

}  // namespace purrbeat
