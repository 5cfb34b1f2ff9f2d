#pragma once

#include <string>
#include <vector>

namespace vfo {

struct SampledSignal {
    double sample_rate = 0.0;
    std::vector<double> samples;
    std::string label;  // free-form provenance, e.g. source path and channel notes
};

// PCM16 or IEEE-float32 WAV; multi-channel input keeps channel 0 and notes the
// selection in the label
SampledSignal load_wav(const std::string& path);

enum class WavEncoding { pcm16, float32 };

void write_wav(const std::string& path, const SampledSignal& signal,
               WavEncoding encoding = WavEncoding::pcm16);

}
