//! Calendar covariates derived deterministically from a UTC timestamp.
//!
//! Encodings are fixed: part-of-day bands are night [00:00, 06:00),
//! morning [06:00, 12:00), afternoon [12:00, 18:00), evening [18:00, 24:00);
//! seasons follow the meteorological month bands (Dec–Feb winter, Mar–May
//! spring, Jun–Aug summer, Sep–Nov autumn); workdays are Monday–Friday
//! (public holidays are out of scope).

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartOfDay {
    Night,
    Morning,
    Afternoon,
    Evening,
}

impl PartOfDay {
    pub const ALL: [PartOfDay; 4] = [
        PartOfDay::Night,
        PartOfDay::Morning,
        PartOfDay::Afternoon,
        PartOfDay::Evening,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartOfDay::Night => "night",
            PartOfDay::Morning => "morning",
            PartOfDay::Afternoon => "afternoon",
            PartOfDay::Evening => "evening",
        }
    }
}

impl std::fmt::Display for PartOfDay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [
        Season::Winter,
        Season::Spring,
        Season::Summer,
        Season::Autumn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Time-related covariates for one half-hour slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    /// 0–23.
    pub hour_of_day: u8,
    pub part_of_day: PartOfDay,
    pub is_workday: bool,
    /// 0–6, Monday = 0.
    pub day_of_week: u8,
    /// 1–12.
    pub month: u8,
    pub season: Season,
}

pub fn derive_calendar(t: DateTime<Utc>) -> CalendarFeatures {
    let hour = t.hour() as u8;
    let part_of_day = match hour {
        0..=5 => PartOfDay::Night,
        6..=11 => PartOfDay::Morning,
        12..=17 => PartOfDay::Afternoon,
        _ => PartOfDay::Evening,
    };
    let day_of_week = t.weekday().num_days_from_monday() as u8;
    let month = t.month() as u8;
    let season = match month {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Autumn,
    };
    CalendarFeatures {
        hour_of_day: hour,
        part_of_day,
        is_workday: day_of_week < 5,
        day_of_week,
        month,
        season,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    #[test]
    fn winter_workday_evening() {
        let t = Utc.with_ymd_and_hms(2013, 1, 15, 18, 30, 0).unwrap();
        let c = derive_calendar(t);
        assert_eq!(c.hour_of_day, 18);
        assert_eq!(c.part_of_day, PartOfDay::Evening);
        assert!(c.is_workday);
        assert_eq!(c.day_of_week, 1, "2013-01-15 is a Tuesday");
        assert_eq!(c.month, 1);
        assert_eq!(c.season, Season::Winter);
    }

    #[test]
    fn summer_sunday_night() {
        let t = Utc.with_ymd_and_hms(2013, 6, 2, 3, 0, 0).unwrap();
        let c = derive_calendar(t);
        assert_eq!(c.part_of_day, PartOfDay::Night);
        assert!(!c.is_workday);
        assert_eq!(c.day_of_week, 6, "2013-06-02 is a Sunday");
        assert_eq!(c.season, Season::Summer);
    }

    #[test]
    fn midnight_is_night() {
        let t = Utc.with_ymd_and_hms(2020, 7, 1, 0, 0, 0).unwrap();
        let c = derive_calendar(t);
        assert_eq!(c.hour_of_day, 0);
        assert_eq!(c.part_of_day, PartOfDay::Night);
    }

    /// Sakamoto's method, an independent civil-calendar weekday oracle.
    /// Returns 0 = Sunday … 6 = Saturday.
    fn sakamoto_weekday(mut y: i32, m: u32, d: u32) -> u32 {
        const T: [i32; 12] = [0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4];
        if m < 3 {
            y -= 1;
        }
        ((y + y / 4 - y / 100 + y / 400 + T[(m - 1) as usize] + d as i32) % 7) as u32
    }

    proptest! {
        #[test]
        fn agrees_with_sakamoto_oracle(secs in 0_i64..4_000_000_000) {
            let t = DateTime::<Utc>::from_timestamp(secs, 0).unwrap();
            let c = derive_calendar(t);
            // Sakamoto counts Sunday = 0; our convention is Monday = 0.
            let oracle = (sakamoto_weekday(t.year(), t.month(), t.day()) + 6) % 7;
            prop_assert_eq!(c.day_of_week as u32, oracle);
            prop_assert_eq!(c.is_workday, c.day_of_week < 5);
        }

        #[test]
        fn bands_are_total_and_consistent(secs in 0_i64..4_000_000_000) {
            let t = DateTime::<Utc>::from_timestamp(secs, 0).unwrap();
            let c = derive_calendar(t);
            let band = match c.part_of_day {
                PartOfDay::Night => 0..6,
                PartOfDay::Morning => 6..12,
                PartOfDay::Afternoon => 12..18,
                PartOfDay::Evening => 18..24,
            };
            prop_assert!(band.contains(&c.hour_of_day));
            let months: &[u8] = match c.season {
                Season::Winter => &[12, 1, 2],
                Season::Spring => &[3, 4, 5],
                Season::Summer => &[6, 7, 8],
                Season::Autumn => &[9, 10, 11],
            };
            prop_assert!(months.contains(&c.month));
        }
    }
}
