//! Two-line, 16-column OLED rendering.

use serde::{Deserialize, Serialize};

use super::SensorReading;

pub const DISPLAY_COLUMNS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayFrame {
    pub line1: String,
    pub line2: String,
}

pub fn render_display(r: &SensorReading, pump_on: bool) -> DisplayFrame {
    let line1 = format!(
        "T:{}C H:{}%",
        i32::from(r.temp_cdegc) / 100,
        r.rh_cpct / 100
    );
    let tenths = (u32::from(r.moisture_cpct) + 5) / 10;
    // "M:100.0% PUMP:OFF" is 17 columns; a saturated sensor drops the decimal.
    let moisture = if tenths >= 1000 {
        format!("{}", tenths / 10)
    } else {
        format!("{}.{}", tenths / 10, tenths % 10)
    };
    let line2 = format!("M:{moisture}% PUMP:{}", if pump_on { "ON" } else { "OFF" });
    DisplayFrame { line1, line2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reading(moisture: u16, temp: i16, rh: u16) -> SensorReading {
        SensorReading {
            moisture_cpct: moisture,
            temp_cdegc: temp,
            rh_cpct: rh,
            timestamp_ms: 0,
        }
    }

    #[test]
    fn typical_frame() {
        let d = render_display(&reading(4230, 2800, 6500), true);
        assert_eq!(d.line1, "T:28C H:65%");
        assert_eq!(d.line2, "M:42.3% PUMP:ON");
    }

    #[test]
    fn zero_and_lower_bounds() {
        assert_eq!(
            render_display(&reading(0, 2500, 5000), false).line2,
            "M:0.0% PUMP:OFF"
        );
        assert_eq!(
            render_display(&reading(0, 500, 2000), false).line1,
            "T:5C H:20%"
        );
    }

    #[test]
    fn saturated_sensor_fits() {
        let d = render_display(&reading(10_000, 5000, 9000), false);
        assert_eq!(d.line2, "M:100% PUMP:OFF");
        assert_eq!(d.line1, "T:50C H:90%");
    }

    proptest! {
        #[test]
        fn lines_fit_the_panel(m in 0u16..=10_000, t in 0i16..=50, h in 20u16..=90, pump: bool) {
            let d = render_display(&reading(m, t * 100, h * 100), pump);
            prop_assert!(d.line1.len() <= DISPLAY_COLUMNS && d.line1.is_ascii());
            prop_assert!(d.line2.len() <= DISPLAY_COLUMNS && d.line2.is_ascii());
        }
    }
}
