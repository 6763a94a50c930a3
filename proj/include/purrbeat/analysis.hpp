#pragma once

// Signal analysis used to check rendered cues against their parameter laws:
// band envelopes, onset detection, rate trajectories, dominant frequencies
// and envelope breakpoint fitting. Nothing here modifies its input.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "purrbeat/error.hpp"
#include "purrbeat/peaking_eq.hpp"
#include "purrbeat/synth_core.hpp"

namespace purrbeat::analysis {

struct Band {
    double lo_hz = 0.0;
    double hi_hz = 0.0;

    double center() const { return 0.5 * (lo_hz + hi_hz); }
    double half_width() const { return 0.5 * (hi_hz - lo_hz); }
};

inline void check_band(const Band& b, double sample_rate) {
    if (!(b.lo_hz >= 0.0 && b.hi_hz > b.lo_hz && b.hi_hz < sample_rate / 2.0))
        throw ValidationError("band must satisfy 0 <= lo < hi < fs/2");
}

inline std::span<const float> mono_samples(const SampleBuffer& b) {
    if (b.channels() != 1) throw ValidationError("analysis expects a mono buffer");
    return b.channel(0);
}

// ---------------------------------------------------------------------------
// Zero-phase Butterworth smoothing

/// 4th-order Butterworth low-pass as two biquads, run forward then backward.
class ZeroPhaseLowpass {
public:
    ZeroPhaseLowpass(double cutoff_hz, double sample_rate) {
        static constexpr std::array<double, 2> kSectionQ = {0.54119610014619701, 1.3065629648763764};
        const double w0 = kTwoPi * cutoff_hz / sample_rate;
        const double cw = std::cos(w0);
        for (std::size_t s = 0; s < 2; ++s) {
            const double alpha = std::sin(w0) / (2.0 * kSectionQ[s]);
            const double a0 = 1.0 + alpha;
            BiquadCoefficients c;
            c.b0 = (1.0 - cw) / 2.0 / a0;
            c.b1 = (1.0 - cw) / a0;
            c.b2 = c.b0;
            c.a1 = -2.0 * cw / a0;
            c.a2 = (1.0 - alpha) / a0;
            sections_[s] = c;
        }
    }

    void apply(std::vector<double>& x) const {
        for (const auto& c : sections_) {
            Biquad f(c);
            for (double& v : x) v = f.process(v);
        }
        for (const auto& c : sections_) {
            Biquad f(c);
            for (auto it = x.rbegin(); it != x.rend(); ++it) *it = f.process(*it);
        }
    }

private:
    std::array<BiquadCoefficients, 2> sections_;
};

// ---------------------------------------------------------------------------
// Envelopes

struct Envelope {
    double sample_rate = 0.0;   // envelope rate after decimation
    double smoothing_hz = 0.0;  // cutoff of the zero-phase smoother
    std::vector<double> values;

    double time(std::size_t i) const { return static_cast<double>(i) / sample_rate; }
    double duration() const { return static_cast<double>(values.size()) / sample_rate; }
};

inline constexpr double kEnvelopeRateHz = 1000.0;

/// Amplitude envelope of `band`: quadrature demodulation at the band center
/// followed by zero-phase low-pass filtering at the band half-width. Linear
/// segments of the underlying envelope pass through unchanged.
inline Envelope extract_envelope(std::span<const float> x, double sample_rate, const Band& band) {
    check_band(band, sample_rate);
    const std::size_t n = x.size();
    std::vector<double> in(n), quad(n);
    const double f0 = band.center();
    const double step = kTwoPi * f0 / sample_rate;
    const std::complex<double> rot = std::polar(1.0, -step);
    std::complex<double> ph(1.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if ((i & 1023u) == 0) ph = std::polar(1.0, -std::fmod(step * static_cast<double>(i), kTwoPi));
        in[i] = x[i] * ph.real();
        quad[i] = x[i] * ph.imag();
        ph *= rot;
    }
    const ZeroPhaseLowpass lp(band.half_width(), sample_rate);
    lp.apply(in);
    lp.apply(quad);

    const std::size_t dec = std::max<std::size_t>(1, static_cast<std::size_t>(sample_rate / kEnvelopeRateHz));
    Envelope env;
    env.sample_rate = sample_rate / static_cast<double>(dec);
    env.smoothing_hz = band.half_width();
    env.values.reserve(n / dec + 1);
    for (std::size_t i = 0; i < n; i += dec) env.values.push_back(2.0 * std::hypot(in[i], quad[i]));
    return env;
}

inline Envelope extract_envelope(const SampleBuffer& b, const Band& band) {
    return extract_envelope(mono_samples(b), b.sample_rate(), band);
}

// ---------------------------------------------------------------------------
// Onsets and rates

struct OnsetOptions {
    double high_fraction = 0.25;  // trigger, relative to the envelope maximum
    double low_fraction = 0.10;   // re-arm level; onset time is its up-crossing
    double rearm_hold_s = 0.0;    // time the envelope must stay below `low` to re-arm
    double refractory_s = 0.0;    // minimum spacing of reported onsets
    double silence_floor = 1e-7;  // envelope maxima below this count as silence
};

/// Heartbeat bursts beat against each other (20/30 Hz, 25/30 Hz) and dip
/// briefly inside a beat; requiring 0.2 s of quiet keeps one onset per beat.
inline OnsetOptions heartbeat_onset_options() {
    OnsetOptions o;
    o.rearm_hold_s = 0.2;
    return o;
}

inline std::vector<double> detect_onsets(const Envelope& env, const OnsetOptions& opt = {}) {
    std::vector<double> onsets;
    if (env.values.empty()) return onsets;
    const double mx = *std::max_element(env.values.begin(), env.values.end());
    if (!(mx > opt.silence_floor)) return onsets;
    const double high = opt.high_fraction * mx, low = opt.low_fraction * mx;
    const auto hold = static_cast<std::size_t>(std::ceil(opt.rearm_hold_s * env.sample_rate));
    const auto& v = env.values;
    bool armed = true;
    std::size_t quiet = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (armed && v[i] >= high) {
            armed = false;
            quiet = 0;
            std::size_t j = i;
            while (j > 0 && v[j - 1] >= low) --j;
            if (j == 0) continue;  // already sounding at the start: onset not observable
            const double t = (static_cast<double>(j - 1) + (low - v[j - 1]) / (v[j] - v[j - 1])) / env.sample_rate;
            if (onsets.empty() || t - onsets.back() >= opt.refractory_s) onsets.push_back(t);
        } else if (!armed) {
            quiet = v[i] < low ? quiet + 1 : 0;
            if (quiet > hold) armed = true;
        }
    }
    return onsets;
}

inline std::vector<double> detect_onsets(std::span<const float> x, double sample_rate, const Band& band,
                                         const OnsetOptions& opt = {}) {
    return detect_onsets(extract_envelope(x, sample_rate, band), opt);
}

inline std::vector<double> detect_onsets(const SampleBuffer& b, const Band& band, const OnsetOptions& opt = {}) {
    return detect_onsets(mono_samples(b), b.sample_rate(), band, opt);
}

struct RateTrajectory {
    std::vector<double> times;  // interval midpoints, seconds
    std::vector<double> rates;  // events per minute

    double min() const { return *std::min_element(rates.begin(), rates.end()); }
    double max() const { return *std::max_element(rates.begin(), rates.end()); }
    double mean() const { return std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size(); }
};

inline RateTrajectory estimate_rate_trajectory(std::span<const double> onsets) {
    if (onsets.size() < 2) throw ValidationError("rate estimation needs at least two onsets");
    RateTrajectory r;
    for (std::size_t i = 0; i + 1 < onsets.size(); ++i) {
        const double d = onsets[i + 1] - onsets[i];
        if (!(d > 0.0)) throw ValidationError("onsets must be strictly increasing");
        r.times.push_back(0.5 * (onsets[i] + onsets[i + 1]));
        r.rates.push_back(60.0 / d);
    }
    return r;
}

struct ModulationFit {
    double period_s = 0.0;
    double mean = 0.0;
    double amplitude = 0.0;
};

/// Least-squares fit of mean + sinusoid to a rate trajectory, scanning the
/// period over [min_period, max_period].
inline ModulationFit estimate_modulation_period(const RateTrajectory& traj, double min_period = 5.0,
                                                double max_period = 120.0, double step = 0.02) {
    if (traj.rates.size() < 4) throw ValidationError("modulation fit needs at least four rate samples");
    ModulationFit best;
    double best_res = std::numeric_limits<double>::infinity();
    for (double p = min_period; p <= max_period + 1e-12; p += step) {
        Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
        Eigen::Vector3d aty = Eigen::Vector3d::Zero();
        double yy = 0.0;
        for (std::size_t i = 0; i < traj.rates.size(); ++i) {
            const double ph = kTwoPi * traj.times[i] / p;
            const Eigen::Vector3d row(1.0, std::sin(ph), std::cos(ph));
            ata += row * row.transpose();
            aty += row * traj.rates[i];
            yy += traj.rates[i] * traj.rates[i];
        }
        const Eigen::Vector3d c = ata.ldlt().solve(aty);
        const double res = yy - c.dot(aty);
        if (res < best_res) {
            best_res = res;
            best = {p, c(0), std::hypot(c(1), c(2))};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Spectra

inline void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ValidationError("fft length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -kTwoPi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto w = std::polar(1.0, ang * static_cast<double>(k));
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

struct PowerSpectrum {
    double bin_hz = 0.0;
    std::vector<double> power;  // bins 0 .. N/2
};

inline PowerSpectrum power_spectrum(std::span<const float> x, double sample_rate) {
    std::size_t n = 1;
    while (n < x.size()) n <<= 1;
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i];
    fft_inplace(a);
    PowerSpectrum s;
    s.bin_hz = sample_rate / static_cast<double>(n);
    s.power.resize(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) s.power[k] = std::norm(a[k]);
    return s;
}

/// Share of signal energy between lo_hz and hi_hz.
inline double band_energy_fraction(std::span<const float> x, double sample_rate, double lo_hz, double hi_hz) {
    const auto s = power_spectrum(x, sample_rate);
    double total = 0.0, in = 0.0;
    for (std::size_t k = 0; k < s.power.size(); ++k) {
        const double f = k * s.bin_hz;
        total += s.power[k];
        if (f >= lo_hz && f <= hi_hz) in += s.power[k];
    }
    return total > 0.0 ? in / total : 0.0;
}

/// Amplitude of the `freq_hz` sinusoid in x[begin..], by least squares.
inline double sine_amplitude(std::span<const float> x, double sample_rate, double freq_hz, std::size_t begin = 0) {
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d aty = Eigen::Vector2d::Zero();
    for (std::size_t i = begin; i < x.size(); ++i) {
        const double ph = kTwoPi * freq_hz * static_cast<double>(i) / sample_rate;
        const Eigen::Vector2d row(std::cos(ph), std::sin(ph));
        ata += row * row.transpose();
        aty += row * static_cast<double>(x[i]);
    }
    const Eigen::Vector2d c = ata.ldlt().solve(aty);
    return c.norm();
}

// ---------------------------------------------------------------------------
// Dominant frequencies

struct FrequencyOptions {
    double max_hz = 250.0;     // analysis bandwidth
    double window_s = 0.064;   // local stationarity window
    double hop_s = 0.016;
    int max_order = 8;         // complex exponentials per window
    double min_duration_s = 4.0;
};

struct FrequencyComponent {
    double freq_hz = 0.0;
    double weight = 0.0;  // accumulated energy of locally fitted components
};

namespace detail {
/// Frequencies and energies of the sinusoids in one window, or nothing when
/// the window is not a clean sum of undamped sinusoids (e.g. it straddles a
/// pulse edge).
inline std::optional<std::vector<FrequencyComponent>> window_components(std::span<const double> seg, double fs,
                                                                         int max_order) {
    const Eigen::Index w = static_cast<Eigen::Index>(seg.size());
    const Eigen::Index rows = w / 2, cols = w - rows + 1;
    Eigen::MatrixXd h(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) h(i, j) = seg[static_cast<std::size_t>(i + j)];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0)) return std::nullopt;
    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > 1e-3 * sv(0)) ++r;
    if (r > max_order || r >= sv.size() || sv(r) > 1e-4 * sv(0)) return std::nullopt;

    const Eigen::MatrixXd ur = svd.matrixU().leftCols(r);
    const Eigen::MatrixXd u1 = ur.topRows(rows - 1), u2 = ur.bottomRows(rows - 1);
    const Eigen::MatrixXd phi = u1.colPivHouseholderQr().solve(u2);
    const Eigen::VectorXcd z = Eigen::EigenSolver<Eigen::MatrixXd>(phi, false).eigenvalues();

    // Undamped poles are the stationary sinusoids we report. Decaying poles
    // (filter ringing after a pulse edge) are modelled but not reported;
    // growing poles mean the window is not a sum of exponentials.
    std::vector<double> freqs;
    std::vector<std::complex<double>> damped;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const double lr = std::log(std::abs(z(k)));
        if (lr > 0.01) return std::nullopt;
        if (lr < -0.01) {
            if (z(k).imag() >= 0.0) damped.push_back(z(k));
            continue;
        }
        const double f = std::arg(z(k)) * fs / kTwoPi;
        if (f > 0.5) freqs.push_back(f);
    }
    if (freqs.empty()) return std::nullopt;
    std::sort(freqs.begin(), freqs.end());
    std::vector<double> merged;
    std::vector<int> counts;
    for (double f : freqs) {
        if (!merged.empty() && f - merged.back() / counts.back() < 1.0) {
            merged.back() += f;
            ++counts.back();
        } else {
            merged.push_back(f);
            counts.push_back(1);
        }
    }
    for (std::size_t k = 0; k < merged.size(); ++k) merged[k] /= counts[k];

    const Eigen::Index m = static_cast<Eigen::Index>(merged.size());
    const Eigen::Index nd = static_cast<Eigen::Index>(damped.size());
    Eigen::MatrixXd a(w, 2 * m + 2 * nd);
    Eigen::VectorXd y(w);
    for (Eigen::Index i = 0; i < w; ++i) {
        y(i) = seg[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < m; ++k) {
            const double ph = kTwoPi * merged[static_cast<std::size_t>(k)] * static_cast<double>(i) / fs;
            a(i, 2 * k) = std::cos(ph);
            a(i, 2 * k + 1) = std::sin(ph);
        }
        for (Eigen::Index k = 0; k < nd; ++k) {
            const auto zi = std::pow(damped[static_cast<std::size_t>(k)], static_cast<double>(i));
            a(i, 2 * m + 2 * k) = zi.real();
            a(i, 2 * m + 2 * k + 1) = zi.imag();  // zero column for real poles; the QR solve drops it
        }
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    if ((a * c - y).norm() > 1e-2 * y.norm()) return std::nullopt;
    std::vector<FrequencyComponent> out;
    for (Eigen::Index k = 0; k < m; ++k) {
        const double e = 0.5 * (c(2 * k) * c(2 * k) + c(2 * k + 1) * c(2 * k + 1)) * static_cast<double>(w);
        out.push_back({merged[static_cast<std::size_t>(k)], e});
    }
    return out;
}
}  // namespace detail

/// Sinusoidal components ranked by energy. Each short window is decomposed
/// with a subspace (ESPRIT) estimator; estimates from all windows are then
/// clustered in frequency. This resolves components of short gated pulses
/// whose periodogram peaks are pulled apart by leakage.
inline std::vector<FrequencyComponent> frequency_components(std::span<const float> x, double sample_rate,
                                                            const FrequencyOptions& opt = {}) {
    if (static_cast<double>(x.size()) / sample_rate < opt.min_duration_s)
        throw ValidationError("frequency analysis needs at least " + std::to_string(opt.min_duration_s) +
                              " s of signal");
    const double max_hz = std::min(opt.max_hz, 0.45 * sample_rate);
    const std::size_t dec = std::max<std::size_t>(1, static_cast<std::size_t>(sample_rate / (4.0 * max_hz)));
    std::vector<double> y(x.begin(), x.end());
    if (dec > 1) ZeroPhaseLowpass(max_hz, sample_rate).apply(y);
    std::vector<double> d;
    d.reserve(y.size() / dec + 1);
    for (std::size_t i = 0; i < y.size(); i += dec) d.push_back(y[i]);
    const double fs = sample_rate / static_cast<double>(dec);

    const std::size_t w = std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(opt.window_s * fs)));
    const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.hop_s * fs)));
    std::vector<std::size_t> starts;
    std::vector<double> energy;
    for (std::size_t s = 0; s + w <= d.size(); s += hop) {
        double e = 0.0;
        for (std::size_t i = s; i < s + w; ++i) e += d[i] * d[i];
        starts.push_back(s);
        energy.push_back(e);
    }
    if (starts.empty()) return {};
    const double emax = *std::max_element(energy.begin(), energy.end());
    if (!(emax > 0.0)) return {};

    std::vector<FrequencyComponent> est;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (energy[k] < 1e-4 * emax) continue;
        const auto comps = detail::window_components(std::span<const double>(d).subspan(starts[k], w), fs,
                                                     opt.max_order);
        if (comps) est.insert(est.end(), comps->begin(), comps->end());
    }
    if (est.empty()) return {};
    std::sort(est.begin(), est.end(), [](const auto& a, const auto& b) { return a.freq_hz < b.freq_hz; });

    std::vector<FrequencyComponent> clusters;
    double wsum = 0.0, fsum = 0.0, last = est.front().freq_hz;
    for (const auto& e : est) {
        if (e.freq_hz - last >= 0.5 && wsum > 0.0) {
            clusters.push_back({fsum / wsum, wsum});
            wsum = fsum = 0.0;
        }
        wsum += e.weight;
        fsum += e.weight * e.freq_hz;
        last = e.freq_hz;
    }
    if (wsum > 0.0) clusters.push_back({fsum / wsum, wsum});
    std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
    return clusters;
}

inline std::vector<double> dominant_frequencies(std::span<const float> x, double sample_rate, std::size_t n,
                                                const FrequencyOptions& opt = {}) {
    const auto comps = frequency_components(x, sample_rate, opt);
    std::vector<double> out;
    for (std::size_t i = 0; i < std::min(n, comps.size()); ++i) out.push_back(comps[i].freq_hz);
    return out;
}

inline std::vector<double> dominant_frequencies(const SampleBuffer& b, std::size_t n, const FrequencyOptions& opt = {}) {
    return dominant_frequencies(mono_samples(b), b.sample_rate(), n, opt);
}

// ---------------------------------------------------------------------------
// Envelope breakpoints

/// Knots of a rise / mild decay / hold / release envelope, in seconds.
struct Breakpoints {
    double onset = 0.0;
    double attack_end = 0.0;
    double decay_end = 0.0;
    double release_start = 0.0;
    double release_end = 0.0;
    double peak_level = 0.0;
    double sustain_level = 0.0;

    std::array<double, 5> knots() const { return {onset, attack_end, decay_end, release_start, release_end}; }
};

namespace detail {
struct KnotFit {
    std::span<const double> y;
    double rate;
    ZeroPhaseLowpass smoother;

    // Piecewise-linear shape with levels (0, p, s, s, 0), smoothed like the
    // envelope itself, so the fitted knots are not biased by the smoothing.
    std::vector<double> column(const std::array<double, 5>& k, bool peak) const {
        std::vector<double> m(y.size(), 0.0);
        const std::array<double, 5> lv = peak ? std::array<double, 5>{0, 1, 0, 0, 0}
                                              : std::array<double, 5>{0, 0, 1, 1, 0};
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double t = static_cast<double>(i);
            if (t <= k[0] || t >= k[4]) continue;
            std::size_t s = 0;
            while (s < 3 && t >= k[s + 1]) ++s;
            const double u = (t - k[s]) / (k[s + 1] - k[s]);
            m[i] = lv[s] + u * (lv[s + 1] - lv[s]);
        }
        smoother.apply(m);
        return m;
    }

    double cost(const std::array<double, 5>& k, double* p = nullptr, double* s = nullptr) const {
        const auto c1 = column(k, true);
        const auto c2 = column(k, false);
        double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            a11 += c1[i] * c1[i];
            a12 += c1[i] * c2[i];
            a22 += c2[i] * c2[i];
            b1 += c1[i] * y[i];
            b2 += c2[i] * y[i];
        }
        const double det = a11 * a22 - a12 * a12;
        if (!(std::fabs(det) > 1e-300)) return std::numeric_limits<double>::infinity();
        const double lp = (b1 * a22 - b2 * a12) / det;
        const double ls = (a11 * b2 - a12 * b1) / det;
        double r = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double e = lp * c1[i] + ls * c2[i] - y[i];
            r += e * e;
        }
        if (p) *p = lp;
        if (s) *s = ls;
        return r;
    }
};
}  // namespace detail

/// Fits the five knots of a single envelope cycle found in [t_begin, t_end).
inline Breakpoints fit_envelope_breakpoints(const Envelope& env, double t_begin, double t_end) {
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil(t_begin * env.sample_rate)));
    const auto i1 = std::min(env.values.size(), static_cast<std::size_t>(std::floor(t_end * env.sample_rate)));
    if (i1 <= i0 + 16) throw ValidationError("breakpoint window too short");
    const std::span<const double> y(env.values.data() + i0, i1 - i0);

    const auto peak_it = std::max_element(y.begin(), y.end());
    const double mx = *peak_it;
    if (!(mx > 0.0)) throw ValidationError("breakpoint window is silent");
    std::size_t first = 0, last = y.size() - 1;
    while (first < y.size() && y[first] < 0.05 * mx) ++first;
    while (last > first && y[last] < 0.05 * mx) --last;
    const double tp = static_cast<double>(peak_it - y.begin());
    const double ta = static_cast<double>(first), tb = static_cast<double>(last);
    std::array<double, 5> k = {ta, std::max(tp, ta + 1), 0, 0, tb};
    k[2] = k[1] + (tb - k[1]) / 4.0;
    k[3] = k[1] + (tb - k[1]) / 2.0;

    detail::KnotFit fit{y, env.sample_rate, ZeroPhaseLowpass(env.smoothing_hz, env.sample_rate)};
    auto valid = [&](const std::array<double, 5>& c) {
        if (c[0] < 0.0 || c[4] > static_cast<double>(y.size() - 1)) return false;
        for (int i = 0; i < 4; ++i)
            if (!(c[i + 1] - c[i] >= 1.0)) return false;
        return true;
    };
    double best = fit.cost(k);
    const double ms = env.sample_rate / 1000.0;
    for (double step : {16.0 * ms, 8.0 * ms, 4.0 * ms, 2.0 * ms, 1.0 * ms}) {
        bool improved = true;
        while (improved) {
            improved = false;
            // Single knots, then adjacent pairs; the pairs escape the shallow
            // valley where the decay and hold knots trade off.
            for (int i = 0; i < 5; ++i) {
                for (double d : {-step, step}) {
                    auto c = k;
                    c[i] += d;
                    if (!valid(c)) continue;
                    const double v = fit.cost(c);
                    if (v < best) { best = v; k = c; improved = true; }
                }
            }
            for (int i = 0; i < 4; ++i) {
                for (double d : {-step, step}) {
                    for (double e : {-step, step}) {
                        auto c = k;
                        c[i] += d;
                        c[i + 1] += e;
                        if (!valid(c)) continue;
                        const double v = fit.cost(c);
                        if (v < best) { best = v; k = c; improved = true; }
                    }
                }
            }
        }
    }
    Breakpoints b;
    fit.cost(k, &b.peak_level, &b.sustain_level);
    const double base = static_cast<double>(i0);
    b.onset = (base + k[0]) / env.sample_rate;
    b.attack_end = (base + k[1]) / env.sample_rate;
    b.decay_end = (base + k[2]) / env.sample_rate;
    b.release_start = (base + k[3]) / env.sample_rate;
    b.release_end = (base + k[4]) / env.sample_rate;
    return b;
}

}  // namespace purrbeat::analysis
