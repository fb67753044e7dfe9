#pragma once

#include <tlmix/datagen.hpp>
#include <tlmix/diagnostics.hpp>
#include <tlmix/error.hpp>
#include <tlmix/gibbs.hpp>
#include <tlmix/io.hpp>
#include <tlmix/model.hpp>
#include <tlmix/nuplan.hpp>
#include <tlmix/predict.hpp>
#include <tlmix/random.hpp>
