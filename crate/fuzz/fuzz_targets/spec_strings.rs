#![no_main]

use libfuzzer_sys::fuzz_target;
use recdiag::engine::Method;
use recdiag::permute::ScheduleRule;
use recdiag::pipeline::Formats;
use recdiag::simgen::Positions;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rule) = s.parse::<ScheduleRule>() {
        assert_eq!(rule.to_string().parse::<ScheduleRule>().unwrap(), rule);
        let sched = rule.resolve(7, 1);
        if sched.len() <= 10_000 {
            let _ = sched.permutations();
        }
    }
    if let Ok(p) = s.parse::<Positions>() {
        assert_eq!(p.to_string().parse::<Positions>().unwrap(), p);
    }
    if let Ok(m) = s.parse::<Method>() {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    let _ = s.parse::<Formats>();
});
