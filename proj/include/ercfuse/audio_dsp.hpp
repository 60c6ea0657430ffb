#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ercfuse/error.hpp"

namespace ercfuse {

using FeatureVector = std::vector<double>;

struct Waveform {
    std::vector<double> samples;  // mono, nominally in [-1, 1]
    int sample_rate = 0;
};

/// Analysis parameters. Lengths are in samples at the rate the waveform has
/// when it reaches mfcc(); use FrameConfig::standard() for the 25 ms / 10 ms
/// defaults at a given rate.
struct FrameConfig {
    std::size_t frame_length = 400;
    std::size_t hop = 160;
    std::size_t n_fft = 512;
    std::size_t n_mels = 26;
    std::size_t n_mfcc = 13;
    double pre_emphasis = 0.97;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-10;

    static FrameConfig standard(int sample_rate = 16000);

    // Throws Error when an invariant fails for this sample rate.
    void validate(int sample_rate) const;
};

/// Row-major frames x coefficients.
class FrameMatrix {
public:
    FrameMatrix() = default;
    FrameMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// RIFF/WAVE: PCM 16-bit or IEEE float 32-bit (plain or EXTENSIBLE), 1 or 2
/// channels. Stereo is averaged to mono; 16-bit samples are scaled by 1/32768.
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1).
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);
void write_wav_pcm16(const Waveform& w, const std::filesystem::path& path);

/// Polyphase windowed-sinc resampler: 64 taps per phase, Kaiser window with
/// beta 8.6, cutoff at the lower of the two Nyquist rates, every phase
/// normalised to unit DC gain. Output length round(len * target / source).
Waveform resample(const Waveform& w, int target_rate);

/// Triangular HTK-mel filters, n_mels x (n_fft/2 + 1), row-major.
std::vector<double> mel_filterbank(const FrameConfig& cfg, int sample_rate);

// mel(f) = 2595 log10(1 + f/700) and its inverse.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// pre-emphasis -> Hann frames -> |FFT| -> mel -> log(max(e, floor)) -> DCT-II
/// (orthonormal), first n_mfcc coefficients. Inputs shorter than one frame are
/// zero-padded to exactly one frame.
FrameMatrix mfcc(const Waveform& w, const FrameConfig& cfg);

/// Per-coefficient mean followed by per-coefficient population std.
/// Column values are summed in sorted order so the result does not depend on
/// row order.
FeatureVector pool_statistics(const FrameMatrix& m);

// Number of analysis frames for `length` samples (>= 1).
std::size_t frame_count(std::size_t length, std::size_t frame_length, std::size_t hop);

/// End-to-end utterance featurisation: resample to `target_rate` if needed,
/// MFCC, pool.
FeatureVector audio_features(const Waveform& w, const FrameConfig& cfg, int target_rate = 16000);

// In-place iterative radix-2 FFT over split real/imaginary arrays; size must be a power of two.
void fft_inplace(std::vector<double>& re, std::vector<double>& im);

}  // namespace ercfuse
