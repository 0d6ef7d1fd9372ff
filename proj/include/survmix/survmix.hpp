// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include "survmix/data.hpp"
#include "survmix/distributions.hpp"
#include "survmix/em.hpp"
#include "survmix/gibbs.hpp"
#include "survmix/kaplan_meier.hpp"
#include "survmix/manifest.hpp"
#include "survmix/mixture.hpp"
#include "survmix/normal.hpp"
#include "survmix/params.hpp"
#include "survmix/predict.hpp"
#include "survmix/rng.hpp"
#include "survmix/simulate.hpp"
#include "survmix/version.hpp"
