#include <gtest/gtest.h>

#include <string>

#include "evkd/events.hpp"
#include "evkd/rng.hpp"

using namespace evkd;

TEST(ParseCsv, MapsFieldsAndPolarity) {
    const std::string csv = "1000,3,4,1\n2000,3,4,0\n";
    EventStream s = parse_stream(csv, EventFormat::Csv, 8, 8);
    ASSERT_EQ(s.events.size(), 2u);
    EXPECT_EQ(s.width, 8u);
    EXPECT_EQ(s.height, 8u);
    EXPECT_EQ(s.events[0].t, 1000u);
    EXPECT_EQ(s.events[0].x, 3);
    EXPECT_EQ(s.events[0].y, 4);
    EXPECT_EQ(s.events[0].p, +1);
    EXPECT_EQ(s.events[1].p, -1);
}

TEST(ParseCsv, EmptyFileGivesEmptyStream) {
    EventStream s = parse_stream("", EventFormat::Csv, 8, 8);
    EXPECT_TRUE(s.events.empty());
}

TEST(ParseCsv, CoordinateAtResolutionIsRejected) {
    EXPECT_THROW(parse_stream("5,8,0,1\n", EventFormat::Csv, 8, 8), OutOfBounds);
    EXPECT_THROW(parse_stream("5,0,8,1\n", EventFormat::Csv, 8, 8), OutOfBounds);
}

TEST(ParseCsv, MalformedLineReportsLineNumber) {
    try {
        parse_stream("1,2,3,1\nbogus\n", EventFormat::Csv, 8, 8);
        FAIL() << "expected MalformedRecord";
    } catch (const MalformedRecord& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
}

TEST(ParseCsv, PolarityOutsideZeroOneIsRejected) {
    EXPECT_THROW(parse_stream("5,1,1,2\n", EventFormat::Csv, 8, 8), MalformedRecord);
}

TEST(ParseCsv, UnsortedInputIsStableSorted) {
    const std::string csv = "300,1,1,1\n100,2,2,0\n300,3,3,1\n200,4,4,1\n";
    EventStream s = parse_stream(csv, EventFormat::Csv, 8, 8);
    ASSERT_EQ(s.events.size(), 4u);
    EXPECT_EQ(s.events[0].t, 100u);
    EXPECT_EQ(s.events[1].t, 200u);
    // Stability: the two t=300 events keep their input order.
    EXPECT_EQ(s.events[2].x, 1);
    EXPECT_EQ(s.events[3].x, 3);
}

TEST(Evbin, RoundTripIsByteIdentical) {
    EventStream s;
    s.width = 32;
    s.height = 16;
    Rng rng(99);
    for (int i = 0; i < 500; ++i) {
        EventPoint e;
        e.t = static_cast<std::uint64_t>(i) * 7;
        e.x = static_cast<std::uint16_t>(rng.uniform() * 32);
        e.y = static_cast<std::uint16_t>(rng.uniform() * 16);
        e.p = rng.uniform() < 0.5 ? -1 : +1;
        s.events.push_back(e);
    }
    const std::string bytes = serialize_evbin(s);
    EventStream back = parse_stream(bytes, EventFormat::Evbin, 0, 0);
    EXPECT_EQ(back.width, s.width);
    EXPECT_EQ(back.height, s.height);
    ASSERT_EQ(back.events.size(), s.events.size());
    EXPECT_EQ(serialize_evbin(back), bytes);
}

TEST(Evbin, BadMagicIsRejected) {
    EXPECT_THROW(parse_stream("NOPE", EventFormat::Evbin, 0, 0), MalformedRecord);
}

TEST(Evbin, TruncatedPayloadIsRejected) {
    EventStream s;
    s.width = 8;
    s.height = 8;
    s.events.push_back({10, 1, 1, +1});
    std::string bytes = serialize_evbin(s);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(parse_stream(bytes, EventFormat::Evbin, 0, 0), MalformedRecord);
}

TEST(Csv, RoundTripPreservesEvents) {
    EventStream s;
    s.width = 8;
    s.height = 8;
    s.events = {{5, 0, 0, -1}, {6, 7, 7, +1}};
    EventStream back = parse_stream(serialize_csv(s), EventFormat::Csv, 8, 8);
    ASSERT_EQ(back.events.size(), 2u);
    EXPECT_EQ(back.events[1].x, 7);
    EXPECT_EQ(back.events[0].p, -1);
}
