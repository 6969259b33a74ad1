#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "modechoice/dataset.hpp"

namespace fixture {

// Three modes, one attribute of each kind per group.
inline modechoice::AttributeSchema small_schema()
{
    using namespace modechoice;
    AttributeSchema s;
    s.mode_labels = {"TRAIN", "SM", "CAR"};
    s.mode_descriptions = {{"SM", "Swissmetro"}};
    s.respondent_column = "respondent";
    s.availability_column = "available";

    Attribute age{"age", AttributeGroup::socio, AttributeKind::ordinal, "", "Age group", "", {"young", "middle", "old"}, {}};
    Attribute gender{"gender", AttributeGroup::socio, AttributeKind::nominal, "", "Gender", "", {"male", "female"}, {}};
    Attribute purpose{"purpose", AttributeGroup::trip_cat, AttributeKind::nominal, "", "Purpose", "", {"commute", "leisure"}, {}};
    Attribute train_tt{"train_tt", AttributeGroup::trip_num, AttributeKind::continuous, "min", "Travel time", "TRAIN", {}, {}};
    Attribute car_co{"car_co", AttributeGroup::trip_num, AttributeKind::continuous, "CHF", "Cost", "CAR", {}, {}};
    Attribute luggage{"luggage", AttributeGroup::additional, AttributeKind::ordinal, "", "Luggage", "", {"0", "1", "2"},
                      {"none", "one piece", "several pieces"}};
    s.attributes = {age, gender, purpose, train_tt, car_co, luggage};
    s.validate();
    return s;
}

inline const char* small_csv()
{
    return "id,respondent,age,gender,purpose,train_tt,car_co,luggage,available,choice\n"
           "a1,r1,young,male,commute,65,20,0,TRAIN|SM|CAR,train\n"
           "a2,r1,young,male,leisure,237,NA,1,TRAIN|SM,SM\n"
           "a3,r2,old,female,commute,240,35,2,TRAIN|SM|CAR, car \n";
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("modechoice_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace fixture
