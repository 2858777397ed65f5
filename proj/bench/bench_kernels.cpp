// Serial-reference vs OpenMP timings for the convolution and morphology
// kernels. Both variants produce bit-identical output; this target exists
// to show the parallel speedup (or lack of it on one core).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "avuseg/kernels.hpp"

using avuseg::kernels::Conv2dDims;
using avuseg::kernels::MorphDims;

namespace {

struct ConvData {
  Conv2dDims d;
  std::vector<double> in, w, out, grad_out, grad_in, grad_w;

  explicit ConvData(std::int64_t hw) {
    d = Conv2dDims{4, 8, hw, hw, 16, 3, 3, 1, 1, 1};
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto fill = [&](std::vector<double>& v, std::int64_t n) {
      v.resize(n);
      for (auto& x : v) x = u(rng);
    };
    fill(in, d.batch * d.in_ch * d.in_h * d.in_w);
    fill(w, d.out_ch * d.in_ch * d.kh * d.kw);
    fill(grad_out, d.batch * d.out_ch * d.out_h() * d.out_w());
    out.resize(grad_out.size());
    grad_in.resize(in.size());
    grad_w.resize(w.size());
  }
};

struct MorphData {
  MorphDims d;
  std::vector<std::uint8_t> in, out;

  explicit MorphData(std::int64_t side) {
    d = MorphDims{side, side, 4, 3, 3, 1};
    std::mt19937_64 rng(11);
    std::bernoulli_distribution coin(0.4);
    in.resize(d.x * d.y * d.z);
    for (auto& v : in) v = coin(rng);
    out.resize(in.size());
  }
};

template <auto Fn>
void bm_conv_forward(benchmark::State& state) {
  ConvData c(state.range(0));
  for (auto _ : state) {
    Fn(c.in.data(), c.w.data(), c.out.data(), c.d);
    benchmark::DoNotOptimize(c.out.data());
  }
}

template <auto Fn>
void bm_conv_backward_input(benchmark::State& state) {
  ConvData c(state.range(0));
  for (auto _ : state) {
    Fn(c.grad_out.data(), c.w.data(), c.grad_in.data(), c.d);
    benchmark::DoNotOptimize(c.grad_in.data());
  }
}

template <auto Fn>
void bm_conv_backward_weight(benchmark::State& state) {
  ConvData c(state.range(0));
  for (auto _ : state) {
    Fn(c.grad_out.data(), c.in.data(), c.grad_w.data(), c.d);
    benchmark::DoNotOptimize(c.grad_w.data());
  }
}

template <auto Fn>
void bm_morph(benchmark::State& state) {
  MorphData m(state.range(0));
  for (auto _ : state) {
    Fn(m.in.data(), m.out.data(), m.d);
    benchmark::DoNotOptimize(m.out.data());
  }
}

}  // namespace

BENCHMARK(bm_conv_forward<avuseg::kernels::conv2d_forward_serial>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_conv_forward<avuseg::kernels::conv2d_forward_omp>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_conv_backward_input<avuseg::kernels::conv2d_backward_input_serial>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_conv_backward_input<avuseg::kernels::conv2d_backward_input_omp>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_conv_backward_weight<avuseg::kernels::conv2d_backward_weight_serial>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_conv_backward_weight<avuseg::kernels::conv2d_backward_weight_omp>)
    ->Arg(32)->Arg(64);
BENCHMARK(bm_morph<avuseg::kernels::erode_serial>)->Arg(64)->Arg(128);
BENCHMARK(bm_morph<avuseg::kernels::erode_omp>)->Arg(64)->Arg(128);
BENCHMARK(bm_morph<avuseg::kernels::dilate_serial>)->Arg(64)->Arg(128);
BENCHMARK(bm_morph<avuseg::kernels::dilate_omp>)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
