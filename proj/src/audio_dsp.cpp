#include "ercfuse/audio_dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace ercfuse {

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) {
        return 1.0;
    }
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

double kaiser(double x, double half_width, double beta) {
    const double r = x / half_width;
    if (std::abs(r) > 1.0) {
        return 0.0;
    }
    return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / std::cyl_bessel_i(0.0, beta);
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw AudioError("not a RIFF/WAVE container");
    }

    bool have_fmt = false;
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = le32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16 || body + size > bytes.size()) {
                throw AudioError("truncated fmt chunk");
            }
            format = le16(bytes, body);
            channels = le16(bytes, body + 2);
            rate = le32(bytes, body + 4);
            block_align = le16(bytes, body + 12);
            bits = le16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (size < 40) {
                    throw AudioError("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk");
                }
                // First two bytes of the sub-format GUID carry the codec tag.
                format = le16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            if (!have_fmt) {
                throw AudioError("data chunk precedes fmt chunk");
            }
            const bool pcm16 = format == kFormatPcm && bits == 16;
            const bool float32 = format == kFormatFloat && bits == 32;
            if (!pcm16 && !float32) {
                throw AudioError("unknown codec: format tag " + std::to_string(format) + ", " +
                                 std::to_string(bits) + " bits per sample");
            }
            if (channels != 1 && channels != 2) {
                throw AudioError("unsupported channel count " + std::to_string(channels));
            }
            if (rate == 0) {
                throw AudioError("sample rate is zero");
            }
            const std::size_t sample_bytes = bits / 8;
            if (block_align != sample_bytes * channels) {
                throw AudioError("inconsistent block alignment " + std::to_string(block_align));
            }
            if (body + size > bytes.size()) {
                throw AudioError("truncated data chunk: header declares " + std::to_string(size) + " bytes, " +
                                 std::to_string(bytes.size() - body) + " present");
            }
            const std::size_t n_frames = size / block_align;
            if (n_frames == 0) {
                throw AudioError("zero-length audio");
            }

            Waveform w;
            w.sample_rate = static_cast<int>(rate);
            w.samples.resize(n_frames);
            for (std::size_t f = 0; f < n_frames; ++f) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t at = body + f * block_align + c * sample_bytes;
                    if (pcm16) {
                        acc += static_cast<std::int16_t>(le16(bytes, at)) / 32768.0;
                    } else {
                        acc += static_cast<double>(std::bit_cast<float>(le32(bytes, at)));
                    }
                }
                const double s = acc / channels;
                if (!std::isfinite(s)) {
                    throw AudioError("non-finite sample at frame " + std::to_string(f));
                }
                w.samples[f] = s;
            }
            return w;
        }
        pos = body + size + (size & 1U);
    }
    throw AudioError(have_fmt ? "no data chunk" : "no fmt chunk");
}

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw AudioError("cannot open audio file '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const AudioError& e) {
        throw AudioError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w) {
    if (w.sample_rate <= 0) {
        throw AudioError("sample rate must be positive");
    }
    const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(out, 16);
    put16(out, kFormatPcm);
    put16(out, 1);
    put32(out, static_cast<std::uint32_t>(w.sample_rate));
    put32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
    put16(out, 2);
    put16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put32(out, data_bytes);
    for (double s : w.samples) {
        const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
        const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

void write_wav_pcm16(const Waveform& w, const std::filesystem::path& path) {
    const auto bytes = encode_wav_pcm16(w);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw AudioError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Waveform resample(const Waveform& w, int target_rate) {
    if (target_rate <= 0) {
        throw AudioError("target rate must be positive");
    }
    if (w.sample_rate <= 0) {
        throw AudioError("source rate must be positive");
    }
    if (w.sample_rate == target_rate) {
        return w;
    }

    constexpr int kTaps = 64;
    constexpr int kHalf = kTaps / 2;
    constexpr double kBeta = 8.6;

    const auto g = std::gcd(w.sample_rate, target_rate);
    const auto up = static_cast<std::uint64_t>(target_rate / g);
    const auto down = static_cast<std::uint64_t>(w.sample_rate / g);
    const double cutoff = std::min(1.0, static_cast<double>(target_rate) / w.sample_rate);

    // phases[p][k] weights input sample (base - kHalf + 1 + k) for an output
    // instant base + p/up.
    std::vector<std::vector<double>> phases(up, std::vector<double>(kTaps));
    for (std::uint64_t p = 0; p < up; ++p) {
        const double frac = static_cast<double>(p) / static_cast<double>(up);
        double sum = 0.0;
        for (int k = 0; k < kTaps; ++k) {
            const double d = static_cast<double>(kHalf - 1 - k) + frac;
            const double h = cutoff * sinc(cutoff * d) * kaiser(d, kHalf, kBeta);
            phases[p][static_cast<std::size_t>(k)] = h;
            sum += h;
        }
        for (double& h : phases[p]) {
            h /= sum;
        }
    }

    const auto len = static_cast<std::uint64_t>(w.samples.size());
    const std::uint64_t src = static_cast<std::uint64_t>(w.sample_rate);
    const std::uint64_t dst = static_cast<std::uint64_t>(target_rate);
    const std::uint64_t out_len = (2 * len * dst + src) / (2 * src);

    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    const auto n_in = static_cast<std::int64_t>(len);
    for (std::uint64_t n = 0; n < out_len; ++n) {
        const std::uint64_t pos = n * down;
        const auto base = static_cast<std::int64_t>(pos / up);
        const auto& taps = phases[pos % up];
        double acc = 0.0;
        for (int k = 0; k < kTaps; ++k) {
            const std::int64_t j = base - kHalf + 1 + k;
            if (j >= 0 && j < n_in) {
                acc += taps[static_cast<std::size_t>(k)] * w.samples[static_cast<std::size_t>(j)];
            }
        }
        out.samples[n] = acc;
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FrameConfig FrameConfig::standard(int sample_rate) {
    FrameConfig cfg;
    cfg.frame_length = static_cast<std::size_t>(std::lround(0.025 * sample_rate));
    cfg.hop = static_cast<std::size_t>(std::lround(0.010 * sample_rate));
    cfg.n_fft = std::bit_ceil(cfg.frame_length);
    cfg.fmax = sample_rate / 2.0;
    return cfg;
}

void FrameConfig::validate(int sample_rate) const {
    if (sample_rate <= 0) {
        throw AudioError("sample rate must be positive");
    }
    if (frame_length == 0 || hop == 0 || hop > frame_length) {
        throw AudioError("frame config requires 0 < hop <= frame_length");
    }
    if (!is_power_of_two(n_fft) || n_fft < frame_length) {
        throw AudioError("n_fft must be a power of two >= frame_length");
    }
    if (n_mels == 0 || n_mfcc == 0 || n_mfcc > n_mels) {
        throw AudioError("frame config requires 0 < n_mfcc <= n_mels");
    }
    if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0)) {
        throw AudioError("pre_emphasis must lie in [0, 1)");
    }
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
        throw AudioError("frame config requires 0 <= fmin < fmax <= sample_rate / 2");
    }
    if (!(log_floor > 0.0)) {
        throw AudioError("log floor must be positive");
    }
}

std::vector<double> mel_filterbank(const FrameConfig& cfg, int sample_rate) {
    cfg.validate(sample_rate);
    const std::size_t n_bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);

    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
    }

    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.n_fft);
    std::vector<double> fb(cfg.n_mels * n_bins, 0.0);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m];
        const double centre = edges[m + 1];
        const double hi = edges[m + 2];
        bool any = false;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            const double rise = (f - lo) / (centre - lo);
            const double fall = (hi - f) / (hi - centre);
            const double v = std::max(0.0, std::min(rise, fall));
            fb[m * n_bins + k] = v;
            any = any || v > 0.0;
        }
        if (!any) {
            throw AudioError("mel filter " + std::to_string(m) + " covers no FFT bin; n_mels=" +
                             std::to_string(cfg.n_mels) + " is too large for n_fft=" + std::to_string(cfg.n_fft));
        }
    }
    return fb;
}

void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (!is_power_of_two(n) || im.size() != n) {
        throw AudioError("fft size must be a power of two with matching imaginary part");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const double wr = std::cos(ang * static_cast<double>(k));
                const double wi = std::sin(ang * static_cast<double>(k));
                const std::size_t a = start + k;
                const std::size_t b = a + len / 2;
                const double tr = re[b] * wr - im[b] * wi;
                const double ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
    }
}

std::size_t frame_count(std::size_t length, std::size_t frame_length, std::size_t hop) {
    if (length <= frame_length) {
        return 1;
    }
    return 1 + (length - frame_length) / hop;
}

FrameMatrix mfcc(const Waveform& w, const FrameConfig& cfg) {
    cfg.validate(w.sample_rate);
    if (w.samples.empty()) {
        throw AudioError("mfcc of an empty waveform");
    }
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        if (!std::isfinite(w.samples[i])) {
            throw AudioError("non-finite sample at index " + std::to_string(i));
        }
    }

    std::vector<double> x(std::max(w.samples.size(), cfg.frame_length), 0.0);
    x[0] = w.samples[0];
    for (std::size_t i = 1; i < w.samples.size(); ++i) {
        x[i] = w.samples[i] - cfg.pre_emphasis * w.samples[i - 1];
    }

    const std::size_t n_frames = frame_count(x.size(), cfg.frame_length, cfg.hop);
    const std::size_t n_bins = cfg.n_fft / 2 + 1;
    const auto fb = mel_filterbank(cfg, w.sample_rate);

    std::vector<double> window(cfg.frame_length, 1.0);
    if (cfg.frame_length > 1) {
        for (std::size_t i = 0; i < cfg.frame_length; ++i) {
            window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                             static_cast<double>(cfg.frame_length - 1));
        }
    }

    // Orthonormal DCT-II basis, n_mfcc x n_mels.
    std::vector<double> dct(cfg.n_mfcc * cfg.n_mels);
    const double n_mels = static_cast<double>(cfg.n_mels);
    for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
        for (std::size_t n = 0; n < cfg.n_mels; ++n) {
            dct[k * cfg.n_mels + n] =
                scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                                 (2.0 * n_mels));
        }
    }

    FrameMatrix out(n_frames, cfg.n_mfcc);
    std::vector<double> re(cfg.n_fft);
    std::vector<double> im(cfg.n_fft);
    std::vector<double> mag(n_bins);
    std::vector<double> log_mel(cfg.n_mels);
    for (std::size_t f = 0; f < n_frames; ++f) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        const std::size_t start = f * cfg.hop;
        for (std::size_t i = 0; i < cfg.frame_length; ++i) {
            re[i] = x[start + i] * window[i];
        }
        fft_inplace(re, im);
        for (std::size_t k = 0; k < n_bins; ++k) {
            mag[k] = std::hypot(re[k], im[k]);
        }
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) {
                e += fb[m * n_bins + k] * mag[k];
            }
            log_mel[m] = std::log(std::max(e, cfg.log_floor));
        }
        auto row = out.row(f);
        for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
            double c = 0.0;
            for (std::size_t n = 0; n < cfg.n_mels; ++n) {
                c += dct[k * cfg.n_mels + n] * log_mel[n];
            }
            row[k] = c;
        }
    }
    return out;
}

FeatureVector pool_statistics(const FrameMatrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw AudioError("cannot pool an empty frame matrix");
    }
    const std::size_t n = m.rows();
    FeatureVector out(2 * m.cols());
    std::vector<double> column(n);
    std::vector<double> sq(n);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            column[r] = m(r, c);
        }
        std::sort(column.begin(), column.end());
        const double mean = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
            const double d = column[r] - mean;
            sq[r] = d * d;
        }
        const double var = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(n);
        out[c] = mean;
        out[m.cols() + c] = std::sqrt(var);
    }
    return out;
}

FeatureVector audio_features(const Waveform& w, const FrameConfig& cfg, int target_rate) {
    if (w.sample_rate == target_rate) {
        return pool_statistics(mfcc(w, cfg));
    }
    return pool_statistics(mfcc(resample(w, target_rate), cfg));
}

}  // namespace ercfuse
