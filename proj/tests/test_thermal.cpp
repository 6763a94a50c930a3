#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "purrbeat/thermal.hpp"

using namespace purrbeat;
using namespace purrbeat::thermal;

TEST(ThermalSettings, TableRangesAndTargets) {
    EXPECT_EQ(settings().size(), 4u);
    EXPECT_EQ(find_setting(1).target_c(), 28.0);
    EXPECT_EQ(find_setting(2).target_c(), 35.5);
    EXPECT_EQ(find_setting(3).target_c(), 38.5);
    EXPECT_EQ(find_setting(4).target_c(), 41.5);
    EXPECT_EQ(find_setting(2).lo_c, 35.0);
    EXPECT_EQ(find_setting(4).hi_c, 43.0);
    EXPECT_THROW(find_setting(0), ValidationError);
    EXPECT_THROW(find_setting(5), ValidationError);
}

TEST(Thermal, SetSettingUpdatesTarget) {
    auto s = power_on(initial_state());
    s = set_setting(s, 2);
    EXPECT_EQ(s.target_temp_c, 35.5);
    s = set_setting(s, 1);
    EXPECT_EQ(s.target_temp_c, 28.0);
    EXPECT_EQ(s.setting, 1);
}

TEST(Thermal, SetSettingRequiresPower) {
    EXPECT_THROW(set_setting(initial_state(), 2), ValidationError);
}

TEST(Thermal, DiscomfortBlocksIncreaseButAllowsHoldAndDecrease) {
    auto s = set_discomfort(set_setting(power_on(initial_state()), 2), true);
    EXPECT_THROW(set_setting(s, 3), InterlockError);
    EXPECT_NO_THROW(set_setting(s, 2));
    const auto d = set_setting(s, 1);
    EXPECT_EQ(d.target_temp_c, 28.0);
    // unset counts as lowest: any first setting with discomfort is an increase
    auto u = set_discomfort(power_on(initial_state()), true);
    EXPECT_THROW(set_setting(u, 1), InterlockError);
    // clearing discomfort lifts the interlock
    EXPECT_EQ(set_setting(set_discomfort(s, false), 3).setting, 3);
}

TEST(Thermal, TimerExpiryInsideStepPowersOff) {
    auto s = set_setting(power_on(initial_state(), 300.0), 2);
    s = step(s, 301.0);
    EXPECT_FALSE(s.powered);
    EXPECT_EQ(s.target_temp_c, s.ambient_c);
    EXPECT_FALSE(s.timer_remaining.has_value());
    EXPECT_FALSE(s.setting.has_value());
    EXPECT_DOUBLE_EQ(s.time_s, 301.0);
    // 300 s heating toward 35.5 then 1 s cooling toward 22
    const double at300 = 35.5 + (22 - 35.5) * std::exp(-300.0 / 120.0);
    EXPECT_NEAR(s.current_temp_c, 22 + (at300 - 22) * std::exp(-1.0 / 480.0), 1e-9);
}

TEST(Thermal, TimerNotYetExpiredCountsDown) {
    auto s = set_setting(power_on(initial_state(), 300.0), 2);
    s = step(s, 299.0);
    EXPECT_TRUE(s.powered);
    ASSERT_TRUE(s.timer_remaining);
    EXPECT_NEAR(*s.timer_remaining, 1.0, 1e-12);
}

TEST(Thermal, ReachesTargetWithinOnePercentAfterFiveTau) {
    for (int id = 1; id <= 4; ++id) {
        auto s = set_setting(power_on(initial_state()), id);
        const double gap = s.target_temp_c - 22.0;
        s = step(s, 5 * 120.0);
        EXPECT_LT(std::abs(s.current_temp_c - s.target_temp_c), 0.01 * std::abs(gap)) << id;
    }
}

TEST(Thermal, ExactFirstOrderSolutionIndependentOfStepSize) {
    auto a = set_setting(power_on(initial_state()), 3);
    auto b = a;
    a = step(a, 200.0);
    for (int i = 0; i < 2000; ++i) b = step(b, 0.1);
    EXPECT_NEAR(a.current_temp_c, b.current_temp_c, 1e-9);
    EXPECT_NEAR(a.current_temp_c, 38.5 + (22 - 38.5) * std::exp(-200.0 / 120.0), 1e-12);
}

TEST(Thermal, NoOvershootHeatingOrCooling) {
    auto s = set_setting(power_on(initial_state()), 4);
    double prev = s.current_temp_c;
    for (int i = 0; i < 2000; ++i) {
        s = step(s, 1.0);
        ASSERT_LE(s.current_temp_c, 41.5 + 1e-12);
        ASSERT_GE(s.current_temp_c, prev);
        prev = s.current_temp_c;
    }
    s = set_setting(s, 1);
    for (int i = 0; i < 5000; ++i) {
        s = step(s, 1.0);
        ASSERT_GE(s.current_temp_c, 28.0 - 1e-12);
        ASSERT_LE(s.current_temp_c, prev);
        prev = s.current_temp_c;
    }
}

TEST(Thermal, CoolingUsesSlowerTimeConstant) {
    ThermalConfig cfg;
    auto s = initial_state(cfg);
    s.current_temp_c = 35.0;  // pad switched off while warm
    s = step(s, 480.0, cfg);
    EXPECT_NEAR(s.current_temp_c, 22.0 + 13.0 * std::exp(-1.0), 1e-12);
}

TEST(Thermal, ConfigValidation) {
    EXPECT_THROW(initial_state({22, 0, 480}), ValidationError);
    EXPECT_THROW(step(initial_state(), 0.0), ValidationError);
    EXPECT_THROW(power_on(initial_state(), -1.0), ValidationError);
}

TEST(ThermalSession, LogsEventsAndRejections) {
    ThermalSession sess;
    sess.power_on();
    sess.set_setting(2);
    sess.set_discomfort(true);
    EXPECT_THROW(sess.set_setting(3), InterlockError);
    EXPECT_EQ(sess.state().setting, 2);
    const auto& log = sess.log();
    EXPECT_EQ(log.front(), kLogHeader);
    EXPECT_NE(log.back().find("event=rejected_increase"), std::string::npos);
    EXPECT_NE(log.back().find("setting=2"), std::string::npos);
}

TEST(ThermalSession, AdvanceRecordsTimerExpiry) {
    ThermalSession sess;
    sess.power_on(90.0);
    sess.set_setting(2);
    sess.advance(120, 60);
    const auto& log = sess.log();
    EXPECT_NE(log.back().find("event=timer_expired"), std::string::npos);
    EXPECT_NE(log.back().find("powered=0"), std::string::npos);
    EXPECT_NE(log[log.size() - 2].find("timer=30.000"), std::string::npos);
}

TEST(ThermalScript, RunsCommandsAndCollectsRejections) {
    std::istringstream in(
        "# warm-up\n"
        "power on\n"
        "set 2   # mild\n"
        "advance 600 every 60\n"
        "discomfort on\n"
        "set 4\n"
        "set 1\n"
        "timer 120\n"
        "advance 200\n");
    ThermalSession sess;
    const auto r = run_script(in, sess);
    EXPECT_EQ(r.commands, 8u);
    ASSERT_EQ(r.rejections.size(), 1u);
    EXPECT_NE(r.rejections[0].find("line 6"), std::string::npos);
    EXPECT_FALSE(sess.state().powered);
    EXPECT_DOUBLE_EQ(sess.state().time_s, 800.0);
}

TEST(ThermalScript, MalformedLineReportsOffset) {
    std::istringstream in("power on\nset two\n");
    ThermalSession sess;
    try {
        run_script(in, sess);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 9u);
    }
    std::istringstream in2("power on\nadvance -5\n");
    ThermalSession s2;
    EXPECT_THROW(run_script(in2, s2), std::exception);
    std::istringstream in3("warp 9\n");
    ThermalSession s3;
    EXPECT_THROW(run_script(in3, s3), ParseError);
}
