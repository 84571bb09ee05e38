#include "data_tables.hpp"

namespace cclab::tables {

// CIE 1931 2° standard observer, 380-780 nm at 5 nm. The tail rows pin the
// curves to zero by 785 nm; the true values out to 830 nm are < 1e-4 and do
// not move any integral at the tolerances used here.
const CmfRow kCie1931Cmf2deg[] = {
    {380, 0.001368, 0.000039, 0.006450}, {385, 0.002236, 0.000064, 0.010550},
    {390, 0.004243, 0.000120, 0.020050}, {395, 0.007650, 0.000217, 0.036210},
    {400, 0.014310, 0.000396, 0.067850}, {405, 0.023190, 0.000640, 0.110200},
    {410, 0.043510, 0.001210, 0.207400}, {415, 0.077630, 0.002180, 0.371300},
    {420, 0.134380, 0.004000, 0.645600}, {425, 0.214770, 0.007300, 1.039050},
    {430, 0.283900, 0.011600, 1.385600}, {435, 0.328500, 0.016840, 1.622960},
    {440, 0.348280, 0.023000, 1.747060}, {445, 0.348060, 0.029800, 1.782600},
    {450, 0.336200, 0.038000, 1.772110}, {455, 0.318700, 0.048000, 1.744100},
    {460, 0.290800, 0.060000, 1.669200}, {465, 0.251100, 0.073900, 1.528100},
    {470, 0.195360, 0.090980, 1.287640}, {475, 0.142100, 0.112600, 1.041900},
    {480, 0.095640, 0.139020, 0.812950}, {485, 0.057950, 0.169300, 0.616200},
    {490, 0.032010, 0.208020, 0.465180}, {495, 0.014700, 0.258600, 0.353300},
    {500, 0.004900, 0.323000, 0.272000}, {505, 0.002400, 0.407300, 0.212300},
    {510, 0.009300, 0.503000, 0.158200}, {515, 0.029100, 0.608200, 0.111700},
    {520, 0.063270, 0.710000, 0.078250}, {525, 0.109600, 0.793200, 0.057250},
    {530, 0.165500, 0.862000, 0.042160}, {535, 0.225750, 0.914850, 0.029840},
    {540, 0.290400, 0.954000, 0.020300}, {545, 0.359700, 0.980300, 0.013400},
    {550, 0.433450, 0.994950, 0.008750}, {555, 0.512050, 1.000000, 0.005750},
    {560, 0.594500, 0.995000, 0.003900}, {565, 0.678400, 0.978600, 0.002750},
    {570, 0.762100, 0.952000, 0.002100}, {575, 0.842500, 0.915400, 0.001800},
    {580, 0.916300, 0.870000, 0.001650}, {585, 0.978600, 0.816300, 0.001400},
    {590, 1.026300, 0.757000, 0.001100}, {595, 1.056700, 0.694900, 0.001000},
    {600, 1.062200, 0.631000, 0.000800}, {605, 1.045600, 0.566800, 0.000600},
    {610, 1.002600, 0.503000, 0.000340}, {615, 0.938400, 0.441200, 0.000240},
    {620, 0.854450, 0.381000, 0.000190}, {625, 0.751400, 0.321000, 0.000100},
    {630, 0.642400, 0.265000, 0.000050}, {635, 0.541900, 0.217000, 0.000030},
    {640, 0.447900, 0.175000, 0.000020}, {645, 0.360800, 0.138200, 0.000010},
    {650, 0.283500, 0.107000, 0.000000}, {655, 0.218700, 0.081600, 0.000000},
    {660, 0.164900, 0.061000, 0.000000}, {665, 0.121200, 0.044580, 0.000000},
    {670, 0.087400, 0.032000, 0.000000}, {675, 0.063600, 0.023200, 0.000000},
    {680, 0.046770, 0.017000, 0.000000}, {685, 0.032900, 0.011920, 0.000000},
    {690, 0.022700, 0.008210, 0.000000}, {695, 0.015840, 0.005723, 0.000000},
    {700, 0.011359, 0.004102, 0.000000}, {705, 0.008111, 0.002929, 0.000000},
    {710, 0.005790, 0.002091, 0.000000}, {715, 0.004109, 0.001484, 0.000000},
    {720, 0.002899, 0.001047, 0.000000}, {725, 0.002049, 0.000740, 0.000000},
    {730, 0.001440, 0.000520, 0.000000}, {735, 0.001000, 0.000361, 0.000000},
    {740, 0.000690, 0.000249, 0.000000}, {745, 0.000476, 0.000172, 0.000000},
    {750, 0.000332, 0.000120, 0.000000}, {755, 0.000235, 0.000085, 0.000000},
    {760, 0.000166, 0.000060, 0.000000}, {765, 0.000117, 0.000042, 0.000000},
    {770, 0.000083, 0.000030, 0.000000}, {775, 0.000059, 0.000021, 0.000000},
    {780, 0.000042, 0.000015, 0.000000}, {785, 0.000000, 0.000000, 0.000000},
    {830, 0.000000, 0.000000, 0.000000},
};
const size_t kCie1931Cmf2degCount = sizeof(kCie1931Cmf2deg) / sizeof(kCie1931Cmf2deg[0]);

// Mean and first two principal components of daylight (S0, S1, S2),
// 300-830 nm at 10 nm.
const DaylightRow kDaylightComponents[] = {
    {300, 0.04, 0.02, 0.00},    {310, 6.00, 4.50, 2.00},    {320, 29.60, 22.40, 4.00},
    {330, 55.30, 42.00, 8.50},  {340, 57.30, 40.60, 7.80},  {350, 61.80, 41.60, 6.70},
    {360, 61.50, 38.00, 5.30},  {370, 68.80, 42.40, 6.10},  {380, 63.40, 38.50, 3.00},
    {390, 65.80, 35.00, 1.20},  {400, 94.80, 43.40, -1.10}, {410, 104.80, 46.30, -0.50},
    {420, 105.90, 43.90, -0.70},{430, 96.80, 37.10, -1.20}, {440, 113.90, 36.70, -2.60},
    {450, 125.60, 35.90, -2.90},{460, 125.50, 32.60, -2.80},{470, 121.30, 27.90, -2.60},
    {480, 121.30, 24.30, -2.60},{490, 113.50, 20.10, -1.80},{500, 113.10, 16.20, -1.50},
    {510, 110.80, 13.20, -1.30},{520, 106.50, 8.60, -1.20}, {530, 108.80, 6.10, -1.00},
    {540, 105.30, 4.20, -0.50}, {550, 104.40, 1.90, -0.30}, {560, 100.00, 0.00, 0.00},
    {570, 96.00, -1.60, 0.20},  {580, 95.10, -3.50, 0.50},  {590, 89.10, -3.50, 2.10},
    {600, 90.50, -5.80, 3.20},  {610, 90.30, -7.20, 4.10},  {620, 88.40, -8.60, 4.70},
    {630, 84.00, -9.50, 5.10},  {640, 85.10, -10.90, 6.70}, {650, 81.90, -10.70, 7.30},
    {660, 82.60, -12.00, 8.60}, {670, 84.90, -14.00, 9.80}, {680, 81.30, -13.60, 10.20},
    {690, 71.90, -12.00, 8.30}, {700, 74.30, -13.30, 9.60}, {710, 76.40, -12.90, 8.50},
    {720, 63.30, -10.60, 7.00}, {730, 71.70, -11.60, 7.60}, {740, 77.00, -12.20, 8.00},
    {750, 65.20, -10.20, 6.70}, {760, 47.70, -7.80, 5.20},  {770, 68.60, -11.20, 7.40},
    {780, 65.00, -10.40, 6.80}, {790, 66.00, -10.60, 7.00}, {800, 61.00, -9.70, 6.40},
    {810, 53.30, -8.30, 5.50},  {820, 58.90, -9.30, 6.10},  {830, 61.90, -9.80, 6.50},
};
const size_t kDaylightComponentsCount = sizeof(kDaylightComponents) / sizeof(kDaylightComponents[0]);

// CIE standard illuminant D65, relative power, 300-830 nm at 10 nm.
const SpdRow kD65[] = {
    {300, 0.0341},  {310, 3.2945},  {320, 20.2360}, {330, 37.0535}, {340, 39.9488},
    {350, 44.9117}, {360, 46.6383}, {370, 52.0891}, {380, 49.9755}, {390, 54.6482},
    {400, 82.7549}, {410, 91.4860}, {420, 93.4318}, {430, 86.6823}, {440, 104.8650},
    {450, 117.0080},{460, 117.8120},{470, 114.8610},{480, 115.9230},{490, 108.8110},
    {500, 109.3540},{510, 107.8020},{520, 104.7900},{530, 107.6890},{540, 104.4050},
    {550, 104.0460},{560, 100.0000},{570, 96.3342}, {580, 95.7880}, {590, 88.6856},
    {600, 90.0062}, {610, 89.5991}, {620, 87.6987}, {630, 83.2886}, {640, 83.6992},
    {650, 80.0268}, {660, 80.2146}, {670, 82.2778}, {680, 78.2842}, {690, 69.7213},
    {700, 71.6091}, {710, 74.3490}, {720, 61.6040}, {730, 69.8856}, {740, 75.0870},
    {750, 63.5927}, {760, 46.4182}, {770, 66.8054}, {780, 63.3828}, {790, 63.8434},
    {800, 59.4519}, {810, 55.7054}, {820, 58.6333}, {830, 60.3125},
};
const size_t kD65Count = sizeof(kD65) / sizeof(kD65[0]);

}  // namespace cclab::tables
