#include "emsim/iofile.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "emsim/signature.hpp"

namespace emsim {

namespace {

using nlohmann::json;

// -inf survives a JSON round trip as the string "-inf".
json db_to_json(double v) {
  if (std::isinf(v) && v < 0.0) return "-inf";
  return v;
}

double db_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "-inf") return -std::numeric_limits<double>::infinity();
    throw IoError("scene: unrecognized dB value '" + j.get<std::string>() + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string scene_to_json(const SceneConfig& scene) {
  json j;
  j["format_version"] = 1;
  j["signature"] = json::parse(signature_to_json(scene.signature));
  j["phase"] = phase_name(scene.phase);
  j["channel"] = {{"distance_m", scene.channel.distance_m},
                  {"path_loss_exponent", scene.channel.path_loss_exponent},
                  {"antenna_gain_dbi", scene.channel.antenna_gain_dbi},
                  {"orientation_deg", scene.channel.orientation_deg},
                  {"head_blockage_db", scene.channel.head_blockage_db}};
  json carriers = json::array();
  for (const InterferenceCarrier& c : scene.interference.carriers)
    carriers.push_back(json{{"offset_hz", c.offset_hz},
                            {"power_db", db_to_json(c.power_db)},
                            {"bandwidth_hz", c.bandwidth_hz}});
  j["interference"] = {{"carriers", carriers},
                       {"drift_rate_per_s", scene.interference.drift_rate_per_s}};
  j["noise"] = {{"noise_power_db", db_to_json(scene.noise.noise_power_db)},
                {"floor_tilt_db_per_band", scene.noise.floor_tilt_db_per_band}};
  j["sample_rate_hz"] = scene.sample_rate_hz;
  j["duration_s"] = scene.duration_s;
  j["band_center_hz"] = scene.band_center_hz;
  j["band_index"] = scene.band_index;
  j["seed"] = scene.seed;
  j["capture_id"] = scene.capture_id;
  return j.dump();
}

SceneConfig scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("scene: JSON parse failed: ") + e.what());
  }
  try {
    if (j.value("format_version", 0) != 1) throw IoError("scene: unsupported format_version");
    SceneConfig sc;
    sc.signature = signature_from_json(j.at("signature").dump());
    sc.phase = phase_from_name(j.at("phase").get<std::string>());
    const json& ch = j.at("channel");
    sc.channel.distance_m = ch.at("distance_m").get<double>();
    sc.channel.path_loss_exponent = ch.at("path_loss_exponent").get<double>();
    sc.channel.antenna_gain_dbi = ch.at("antenna_gain_dbi").get<double>();
    sc.channel.orientation_deg = ch.at("orientation_deg").get<double>();
    sc.channel.head_blockage_db = ch.at("head_blockage_db").get<double>();
    const json& inf = j.at("interference");
    for (const json& c : inf.at("carriers")) {
      InterferenceCarrier car;
      car.offset_hz = c.at("offset_hz").get<double>();
      car.power_db = db_from_json(c.at("power_db"));
      car.bandwidth_hz = c.at("bandwidth_hz").get<double>();
      sc.interference.carriers.push_back(car);
    }
    sc.interference.drift_rate_per_s = inf.at("drift_rate_per_s").get<double>();
    sc.noise.noise_power_db = db_from_json(j.at("noise").at("noise_power_db"));
    sc.noise.floor_tilt_db_per_band = j.at("noise").at("floor_tilt_db_per_band").get<double>();
    sc.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    sc.duration_s = j.at("duration_s").get<double>();
    sc.band_center_hz = j.at("band_center_hz").get<double>();
    sc.band_index = j.at("band_index").get<int>();
    sc.seed = j.at("seed").get<std::uint64_t>();
    sc.capture_id = j.at("capture_id").get<std::uint64_t>();
    return sc;
  } catch (const json::exception& e) {
    throw IoError(std::string("scene: missing or malformed field: ") + e.what());
  }
}

std::string scene_fingerprint(const SceneConfig& scene) {
  return to_hex(fnv1a64(scene_to_json(scene)));
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("rename failed: " + tmp + " -> " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void save_iq_pair(const IQRecording& iq, const std::string& data_path,
                  const std::string& fingerprint, const std::string& state) {
  static_assert(sizeof(std::complex<float>) == 8);
  const std::string tmp = data_path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f.write(reinterpret_cast<const char*>(iq.samples.data()),
            static_cast<std::streamsize>(iq.samples.size() * 8));
    if (!f) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), data_path.c_str()) != 0)
    throw IoError("rename failed: " + tmp + " -> " + data_path);

  json side;
  side["format_version"] = 1;
  side["sample_rate_hz"] = iq.sample_rate_hz;
  side["center_frequency_hz"] = iq.center_frequency_hz;
  side["duration_s"] = iq.duration_s();
  side["seed"] = iq.seed;
  side["scene_fingerprint"] = fingerprint;
  side["state"] = state;
  write_text_atomic(data_path + ".json", side.dump(2) + "\n");
}

IQRecording load_iq_pair(const std::string& data_path, SidecarInfo* info) {
  const std::string side_path = data_path + ".json";
  json side;
  try {
    side = json::parse(read_text(side_path));
  } catch (const json::exception& e) {
    throw IoError("sidecar parse failed for " + side_path + ": " + e.what());
  }

  SidecarInfo si;
  try {
    si.format_version = side.at("format_version").get<int>();
    si.sample_rate_hz = side.at("sample_rate_hz").get<double>();
    si.center_frequency_hz = side.at("center_frequency_hz").get<double>();
    si.duration_s = side.at("duration_s").get<double>();
    si.seed = side.at("seed").get<std::uint64_t>();
    si.scene_fingerprint = side.value("scene_fingerprint", "");
    si.state = side.value("state", "unknown");
  } catch (const json::exception& e) {
    throw IoError("sidecar field missing in " + side_path + ": " + e.what());
  }
  if (si.format_version != 1)
    throw IoError("sidecar format_version unsupported in " + side_path);
  if (!(si.sample_rate_hz > 0.0))
    throw IoError("sidecar sample_rate_hz invalid in " + side_path);

  std::ifstream f(data_path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open IQ data: " + data_path);
  const std::streamsize bytes = f.tellg();
  if (bytes % 8 != 0)
    throw IoError("IQ data size is not a whole number of complex float32 samples: " + data_path);
  const std::size_t n = static_cast<std::size_t>(bytes) / 8;

  const double expect = si.duration_s * si.sample_rate_hz;
  if (std::abs(static_cast<double>(n) - expect) > 1.0)
    throw IoError("sidecar mismatch for " + data_path + ": data holds " + std::to_string(n) +
                  " samples but duration_s * sample_rate_hz = " + std::to_string(expect));

  IQRecording iq;
  iq.samples.resize(n);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(iq.samples.data()), bytes);
  if (!f) throw IoError("short read on IQ data: " + data_path);
  iq.sample_rate_hz = si.sample_rate_hz;
  iq.center_frequency_hz = si.center_frequency_hz;
  iq.seed = si.seed;
  if (info) *info = si;
  return iq;
}

void verify_fingerprint(const SidecarInfo& info, const SceneConfig& scene,
                        const std::string& data_path) {
  const std::string want = scene_fingerprint(scene);
  if (info.scene_fingerprint != want)
    throw IoError("scene fingerprint mismatch for " + data_path + ": sidecar has '" +
                  info.scene_fingerprint + "', scene hashes to '" + want + "'");
}

}  // namespace emsim
