#pragma once
// Optional materialization of edit decision lists through an external
// splicing tool (ffmpeg or similar), driven by argument templates.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "versavid/curation.hpp"
#include "versavid/error.hpp"

namespace versavid {

/// Argument templates may use {input} {start} {end} {duration} {output}
/// {list} {fps} {reference}. The probe command must print the duration of
/// {input} in seconds on stdout.
struct RenderAdapterConfig {
  std::string executable;
  std::string probe_executable;  // defaults to `executable`
  std::filesystem::path media_dir;
  std::string media_ext = ".mp4";
  std::filesystem::path work_dir = "render";
  double fps = 25.0;
  std::vector<std::string> cut_args;
  std::vector<std::string> black_args;
  std::vector<std::string> concat_args;
  std::vector<std::string> probe_args;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

inline std::string format_seconds(TimeUs t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", t.seconds());
  return buf;
}

inline std::string expand(std::string arg, const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string slot = "{" + key + "}";
    for (auto pos = arg.find(slot); pos != std::string::npos; pos = arg.find(slot, pos + value.size())) {
      arg.replace(pos, slot.size(), value);
    }
  }
  return arg;
}

/// Runs a command and returns its stdout; throws RenderMismatch on nonzero exit.
inline std::string run_command(const std::string& exe, const std::vector<std::string>& args,
                               const std::vector<std::pair<std::string, std::string>>& vars) {
  std::string cmd = shell_quote(exe);
  for (const auto& a : args) cmd += " " + shell_quote(expand(a, vars));
  cmd += " 2>/dev/null";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw Error(ErrorCode::RenderMismatch, "cannot start: " + cmd);
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe.get())) out += buf.data();
  const int status = pclose(pipe.release());
  if (status != 0) throw Error(ErrorCode::RenderMismatch, "command failed: " + cmd);
  return out;
}

inline bool is_executable(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.empty() || !fs::is_regular_file(path, ec)) return false;
  const auto perms = fs::status(path, ec).permissions();
  return (perms & (fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec)) !=
         fs::perms::none;
}

}  // namespace detail

/// Renders the EDL to work_dir/<output_id><media_ext> and checks that the
/// probed duration is within one frame of the EDL total.
inline std::filesystem::path render_edit_list(const EditDecisionList& edl,
                                              const RenderAdapterConfig& adapter) {
  namespace fs = std::filesystem;
  if (!detail::is_executable(adapter.executable)) {
    throw Error(ErrorCode::AdapterMissing, "render tool '" + adapter.executable + "' not found");
  }
  const auto probe_exe = adapter.probe_executable.empty() ? adapter.executable : adapter.probe_executable;
  if (!detail::is_executable(probe_exe)) {
    throw Error(ErrorCode::AdapterMissing, "probe tool '" + probe_exe + "' not found");
  }
  if (edl.segments.empty()) throw Error(ErrorCode::RenderMismatch, "EDL has no segments");

  std::string safe_id = edl.output_id;
  for (auto& c : safe_id) {
    if (c == '/' || c == '#' || c == '+' || c == ' ') c = '_';
  }
  const auto parts_dir = adapter.work_dir / (safe_id + ".parts");
  fs::create_directories(parts_dir);
  const auto output = adapter.work_dir / (safe_id + adapter.media_ext);
  const auto fps = std::to_string(adapter.fps);

  std::string reference;
  for (const auto& s : edl.segments) {
    if (!s.is_black()) {
      reference = (adapter.media_dir / (*s.source + adapter.media_ext)).string();
      break;
    }
  }

  std::vector<std::string> parts;
  for (std::size_t i = 0; i < edl.segments.size(); ++i) {
    const auto& s = edl.segments[i];
    const auto part = (parts_dir / ("part" + std::to_string(i) + adapter.media_ext)).string();
    std::vector<std::pair<std::string, std::string>> vars{
        {"output", part}, {"fps", fps}, {"reference", reference},
        {"duration", detail::format_seconds(s.duration())}};
    if (s.is_black()) {
      detail::run_command(adapter.executable, adapter.black_args, vars);
    } else {
      vars.push_back({"input", (adapter.media_dir / (*s.source + adapter.media_ext)).string()});
      vars.push_back({"start", detail::format_seconds(s.src_start)});
      vars.push_back({"end", detail::format_seconds(s.src_end)});
      detail::run_command(adapter.executable, adapter.cut_args, vars);
    }
    parts.push_back(part);
  }

  const auto list = parts_dir / "concat.txt";
  {
    std::ofstream f(list);
    for (const auto& p : parts) f << "file '" << fs::absolute(p).string() << "'\n";
  }
  detail::run_command(adapter.executable, adapter.concat_args,
                      {{"list", list.string()}, {"output", output.string()}, {"fps", fps}});

  const auto probed = detail::run_command(probe_exe, adapter.probe_args, {{"input", output.string()}});
  double seconds = 0.0;
  try {
    seconds = std::stod(probed);
  } catch (const std::exception&) {
    throw Error(ErrorCode::RenderMismatch, "probe output '" + probed + "' is not a duration");
  }
  const double expected = edl.total_duration().seconds();
  if (std::abs(seconds - expected) > 1.0 / adapter.fps + 1e-9) {
    throw Error(ErrorCode::RenderMismatch, "rendered " + std::to_string(seconds) + " s, EDL says " +
                                               std::to_string(expected) + " s");
  }
  return output;
}

}  // namespace versavid
