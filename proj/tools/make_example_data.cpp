// Writes the synthetic example markets under data/.

#include "cclv/market_data.hpp"
#include "cclv/synthetic.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;

namespace {

void write_market(const fs::path& dir, const cclv::SyntheticSpec& spec) {
    fs::create_directories(dir);
    const auto bundle = cclv::synthetic_market(spec);
    cclv::write_futures_csv(dir / "futures.csv", bundle.futures);
    cclv::write_vols_csv(dir / "vols.csv", bundle);
    cclv::write_discount_csv(dir / "discount.csv", bundle.discount);
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? argv[1] : "data";
    try {
        cclv::SyntheticSpec wti;
        wti.deliveries = 24;
        wti.quoted_slices = 18;
        write_market(root / "wti", wti);
        cclv::write_returns_csv(root / "wti" / "returns.csv", cclv::synthetic_returns(cclv::wti_params(), 2000, 7));

        cclv::SyntheticSpec ng;
        ng.backbone = cclv::ng_params();
        ng.front_price = 3.2;
        ng.price_step = 0.02;
        ng.skew = 0.15;
        write_market(root / "ng", ng);

        write_market(root / "flat", cclv::flat_smile_spec());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
