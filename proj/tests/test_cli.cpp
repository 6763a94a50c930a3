#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "purrbeat/cli.hpp"

using namespace purrbeat;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "purrbeat_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> v;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) v.push_back(l);
    return v;
}

}  // namespace

TEST(Cli, PresetsTable) {
    const auto r = invoke({"presets"});
    ASSERT_EQ(r.code, 0);
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 9u);  // header + 8 rows
    EXPECT_EQ(ls[4].rfind("4 ", 0), 0u);
    EXPECT_NE(ls[4].find("Most life-like"), std::string::npos);
    EXPECT_NE(ls[4].find("HIGH"), std::string::npos);
    EXPECT_NE(ls[1].find("No vibration (baseline)"), std::string::npos);
}

TEST(Cli, PresetsJsonAndExport) {
    const auto path = scratch("presets.json").string();
    const auto r = invoke({"presets", "--json", "--export", path});
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    ASSERT_EQ(j.size(), 8u);
    EXPECT_EQ(j[4]["rating"], "Medium-High");
    EXPECT_EQ(load_presets(path), preset_table());
}

TEST(Cli, RenderThenVerify) {
    const auto wav = scratch("p4.wav").string();
    auto r = invoke({"render", "--preset", "4", "--duration", "12", "--seed", "7", "--out", wav});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("throat_purr"), std::string::npos);
    EXPECT_TRUE(fs::exists(wav));
    EXPECT_TRUE(fs::exists(sidecar_path(wav)));
    r = invoke({"verify", wav});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("verification passed"), std::string::npos);
    r = invoke({"verify", wav, "--json"});
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["file"], wav);
}

TEST(Cli, RenderExplicitDimsJson) {
    const auto wav = scratch("dims.wav").string();
    const auto r = invoke({"render", "--heartbeat-dims", "1,0,0", "--purr-dims", "0.5,0,1", "--duration", "2", "--format",
                        "pcm16", "--out", wav, "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["frames"], 96000);
    EXPECT_DOUBLE_EQ(j["heartbeat"]["master_gain"].get<double>(), 0.75);
    EXPECT_NEAR(j["purr"]["master_gain"].get<double>(), 0.68, 1e-12);
    EXPECT_EQ(j["purr"]["boost_gain_db"], 10.5);
    std::ifstream f(wav, std::ios::binary);
    char hdr[36];
    f.read(hdr, sizeof hdr);
    EXPECT_EQ(hdr[20], 1);   // integer PCM format tag
    EXPECT_EQ(hdr[34], 16);  // bits per sample
}

TEST(Cli, VerifyDetectsTamperedAudio) {
    const auto wav = scratch("tamper.wav").string();
    ASSERT_EQ(invoke({"render", "--preset", "6", "--duration", "12", "--out", wav}).code, 0);
    // swap in a render of a different preset beneath the original sidecar
    const auto other = scratch("other.wav").string();
    ASSERT_EQ(invoke({"render", "--preset", "4", "--duration", "12", "--out", other}).code, 0);
    fs::copy_file(other, wav, fs::copy_options::overwrite_existing);
    const auto r = invoke({"verify", wav});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("verification FAILED"), std::string::npos);
}

TEST(Cli, VerifyBadInputIsIoError) {
    EXPECT_EQ(invoke({"verify", scratch("missing.wav").string()}).code, 3);
    const auto junk = scratch("junk.wav").string();
    std::ofstream(junk) << "definitely not RIFF";
    EXPECT_EQ(invoke({"verify", junk}).code, 3);
}

TEST(Cli, UsageErrors) {
    auto r = invoke({"dance"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown subcommand 'dance'"), std::string::npos);
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"render", "--dims", "2,0,0", "--out", scratch("x.wav").string()}).code, 2);
    EXPECT_EQ(invoke({"render", "--preset", "4", "--dims", "0,0,0"}).code, 2);
    EXPECT_EQ(invoke({"render", "--preset", "11"}).code, 2);
    EXPECT_EQ(invoke({"render", "--format", "mp3", "--out", scratch("y.wav").string()}).code, 2);
    EXPECT_EQ(invoke({"presets", "--bogus"}).code, 2);
}

TEST(Cli, VersionAndHelp) {
    auto r = invoke({"--version"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, std::string(kVersion) + "\n");
    r = invoke({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("thermal-sim"), std::string::npos);
}

TEST(Cli, ThermalScriptRun) {
    const auto script = scratch("session.txt").string();
    std::ofstream(script) << "power on\nset 3\nadvance 900 every 30\ndiscomfort on\nset 4\npower off\nadvance 60\n";
    auto r = invoke({"thermal-sim", "--script", script, "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["commands"], 7);
    EXPECT_EQ(j["rejections"].size(), 1u);
    EXPECT_FALSE(j["final"]["powered"].get<bool>());
    EXPECT_DOUBLE_EQ(j["final"]["time_s"].get<double>(), 960.0);

    const auto log = scratch("session.log").string();
    r = invoke({"thermal-sim", "--script", script, "--log", log});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("interlock: line 5"), std::string::npos);
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    EXPECT_GE(lines(ss.str()).size(), 30u);

    std::ofstream(script) << "power on\nset hot\n";
    r = invoke({"thermal-sim", "--script", script});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos);
    EXPECT_EQ(invoke({"thermal-sim", "--script", scratch("none.txt").string()}).code, 3);
    EXPECT_EQ(invoke({"thermal-sim", "--tau-heat", "-1", "--script", script}).code, 2);
}

TEST(CliBinary, RunsAsProcess) {
    const char* bin = std::getenv("PURRBEAT_CLI");
    if (!bin) GTEST_SKIP() << "PURRBEAT_CLI not set";
    const std::string cmd = std::string(bin) + " presets --json";
    FILE* p = ::popen(cmd.c_str(), "r");
    ASSERT_NE(p, nullptr);
    std::string out;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
    EXPECT_EQ(::pclose(p), 0);
    EXPECT_EQ(nlohmann::json::parse(out).size(), 8u);
    EXPECT_EQ(WEXITSTATUS(std::system((std::string(bin) + " dance 2>/dev/null").c_str())), 2);
}
