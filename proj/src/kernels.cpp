#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace atxf::kernels {

std::string_view name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

std::optional<Isa> parse_isa(std::string_view text) {
    if (text == "scalar") return Isa::scalar;
    if (text == "avx2") return Isa::avx2;
    return std::nullopt;
}

namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(ATXF_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

std::atomic<int>& selected() {
    static std::atomic<int> isa{static_cast<int>(detect_isa())};
    return isa;
}

}  // namespace

Isa detect_isa() {
    if (const char* forced = std::getenv("ATXF_KERNELS")) {
        if (auto isa = parse_isa(forced); isa && cpu_supports(*isa)) return *isa;
    }
    return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

template <typename T>
const KernelTable<T>& scalar_table() {
    return scalar::table<T>();
}

template <typename T>
const KernelTable<T>* table_for(Isa isa) {
    if (!cpu_supports(isa)) return nullptr;
    switch (isa) {
        case Isa::scalar: return &scalar::table<T>();
        case Isa::avx2:
#if defined(ATXF_HAVE_AVX2)
            return &avx2::table<T>();
#else
            return nullptr;
#endif
    }
    return nullptr;
}

template <typename T>
const KernelTable<T>& active() {
    return *table_for<T>(active_isa());
}

Isa active_isa() { return static_cast<Isa>(selected().load(std::memory_order_relaxed)); }

bool select(Isa isa) {
    if (!cpu_supports(isa)) return false;
    selected().store(static_cast<int>(isa), std::memory_order_relaxed);
    return true;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();
template const KernelTable<float>* table_for<float>(Isa);
template const KernelTable<double>* table_for<double>(Isa);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace atxf::kernels
