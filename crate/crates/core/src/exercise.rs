//! Money exercises: prices built from digit classes, a priced object, a
//! wallet that can always pay, and exact integer-cent answer checking.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ExerciseError};
use crate::model::{Activity, ParameterSpace};

/// Digits that map onto a single note or coin.
pub const DIRECT_DIGITS: [u8; 3] = [1, 2, 5];
/// Digits that need several notes or coins.
pub const COMPOSED_DIGITS: [u8; 6] = [3, 4, 6, 7, 8, 9];

/// Standard euro face values in cents, 1 cent to 500 euros.
pub const EURO_DENOMINATIONS: [u32; 15] = [
    1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000,
];

pub const DEFAULT_TRIAL_LIMIT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(u32);

impl Price {
    pub fn from_cents(cents: u32) -> Self {
        Self(cents)
    }

    pub fn cents(self) -> u32 {
        self.0
    }

    pub fn euros(self) -> u32 {
        self.0 / 100
    }

    pub fn cent_part(self) -> u32 {
        self.0 % 100
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigitClass {
    Direct,
    Composed,
}

impl DigitClass {
    pub fn digits(self) -> &'static [u8] {
        match self {
            DigitClass::Direct => &DIRECT_DIGITS,
            DigitClass::Composed => &COMPOSED_DIGITS,
        }
    }

    pub fn contains(self, digit: u8) -> bool {
        self.digits().contains(&digit)
    }
}

/// Digit classes for tens, units and, for types 4-6, tenths and hundredths.
pub fn digit_pattern(exercise_type: u8) -> Result<&'static [DigitClass], ExerciseError> {
    use DigitClass::{Composed as B, Direct as A};
    Ok(match exercise_type {
        1 => &[A, A],
        2 => &[A, B],
        3 => &[B, B],
        4 => &[A, A, A, A],
        5 => &[B, B, A, A],
        6 => &[B, B, B, B],
        other => return Err(ExerciseError::UnknownExerciseType(other)),
    })
}

/// Price from explicit digits (tens, units[, tenths, hundredths]).
///
/// Digits are not checked against their classes; see [`generate_price`].
pub fn price_from_digits(exercise_type: u8, digits: &[u8]) -> Result<Price, ExerciseError> {
    let pattern = digit_pattern(exercise_type)?;
    assert_eq!(digits.len(), pattern.len(), "digit count for type {exercise_type}");
    let place = [1000u32, 100, 10, 1];
    Ok(Price(
        digits.iter().zip(place).map(|(&d, p)| d as u32 * p).sum(),
    ))
}

/// Draws each digit uniformly from its class.
pub fn generate_price<R: Rng + ?Sized>(exercise_type: u8, rng: &mut R) -> Result<Price, ExerciseError> {
    let pattern = digit_pattern(exercise_type)?;
    let digits: Vec<u8> = pattern
        .iter()
        .map(|class| {
            let options = class.digits();
            options[rng.random_range(0..options.len())]
        })
        .collect();
    price_from_digits(exercise_type, &digits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Presentation {
    #[serde(rename = "WS")]
    WrittenSpoken,
    #[serde(rename = "W")]
    Written,
    #[serde(rename = "S")]
    Spoken,
}

impl Presentation {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "WS" => Some(Self::WrittenSpoken),
            "W" => Some(Self::Written),
            "S" => Some(Self::Spoken),
            _ => None,
        }
    }

    pub fn shows_written(self) -> bool {
        matches!(self, Self::WrittenSpoken | Self::Written)
    }

    pub fn speaks(self) -> bool {
        matches!(self, Self::WrittenSpoken | Self::Spoken)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CentsNotation {
    /// `51€25`
    #[serde(rename = "x€x")]
    EuroSign,
    /// `51,25€`
    #[serde(rename = "x,x€")]
    Comma,
}

impl CentsNotation {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "x€x" => Some(Self::EuroSign),
            "x,x€" | "x.x€" => Some(Self::Comma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoneyKind {
    Real,
    Token,
}

impl MoneyKind {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "Real" => Some(Self::Real),
            "Token" => Some(Self::Token),
            _ => None,
        }
    }
}

pub fn price_written(price: Price, notation: CentsNotation) -> String {
    match notation {
        CentsNotation::EuroSign if price.cent_part() == 0 => format!("{}€", price.euros()),
        CentsNotation::EuroSign => format!("{}€{:02}", price.euros(), price.cent_part()),
        CentsNotation::Comma => format!("{},{:02}€", price.euros(), price.cent_part()),
    }
}

pub fn price_spoken_text(price: Price) -> String {
    let euros = match price.euros() {
        1 => "1 euro".to_string(),
        n => format!("{n} euros"),
    };
    match price.cent_part() {
        0 => euros,
        cents => format!("{euros} {cents}"),
    }
}

/// Fields the client needs to display and/or speak a price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceRendering {
    pub price_written: String,
    pub price_spoken_text: String,
    pub show_written: bool,
    pub speak: bool,
}

impl PriceRendering {
    pub fn new(price: Price, presentation: Presentation, notation: CentsNotation) -> Self {
        Self {
            price_written: price_written(price, notation),
            price_spoken_text: price_spoken_text(price),
            show_written: presentation.shows_written(),
            speak: presentation.speaks(),
        }
    }
}

/// Where the four money-game parameters live in a [`ParameterSpace`] and what
/// each of their values means.
#[derive(Debug, Clone, PartialEq)]
pub struct MoneyBinding {
    exercise_type: (usize, Vec<u8>),
    presentation: (usize, Vec<Presentation>),
    notation: (usize, Vec<CentsNotation>),
    money: (usize, Vec<MoneyKind>),
}

/// The money-game meaning of one activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoneyActivity {
    pub exercise_type: u8,
    pub presentation: Presentation,
    pub notation: CentsNotation,
    pub money: MoneyKind,
}

impl MoneyBinding {
    pub const EXERCISE_TYPE: &'static str = "ExerciseType";
    pub const PRESENTATION: &'static str = "PricePresentation";
    pub const NOTATION: &'static str = "CentsNotation";
    pub const MONEY: &'static str = "MoneyType";

    /// Binds by parameter id; the error names the first unusable parameter or value.
    pub fn bind(space: &ParameterSpace) -> Result<Self, String> {
        fn lookup<T>(
            space: &ParameterSpace,
            id: &str,
            parse: impl Fn(&str) -> Option<T>,
        ) -> Result<(usize, Vec<T>), String> {
            let j = space
                .index_of(id)
                .ok_or_else(|| format!("parameter `{id}` is missing"))?;
            let values = space
                .parameter(j)
                .values
                .iter()
                .map(|v| parse(v).ok_or_else(|| format!("`{id}` value `{v}` is not recognised")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((j, values))
        }
        Ok(Self {
            exercise_type: lookup(space, Self::EXERCISE_TYPE, |v| {
                v.parse::<u8>().ok().filter(|t| (1..=6).contains(t))
            })?,
            presentation: lookup(space, Self::PRESENTATION, Presentation::from_id)?,
            notation: lookup(space, Self::NOTATION, CentsNotation::from_id)?,
            money: lookup(space, Self::MONEY, MoneyKind::from_id)?,
        })
    }

    pub fn resolve(&self, activity: &Activity) -> MoneyActivity {
        MoneyActivity {
            exercise_type: self.exercise_type.1[activity.value(self.exercise_type.0)],
            presentation: self.presentation.1[activity.value(self.presentation.0)],
            notation: self.notation.1[activity.value(self.notation.0)],
            money: self.money.1[activity.value(self.money.0)],
        }
    }

    pub fn exercise_type_param(&self) -> usize {
        self.exercise_type.0
    }

    /// Exercise type of a value index of the exercise-type parameter.
    pub fn exercise_type_of(&self, value: usize) -> u8 {
        self.exercise_type.1[value]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogObject {
    pub id: String,
    pub name: String,
    pub image: String,
    pub min_cents: u32,
    pub max_cents: u32,
}

impl CatalogObject {
    fn distance(&self, price: Price) -> u32 {
        let p = price.cents();
        if p < self.min_cents {
            self.min_cents - p
        } else {
            p.saturating_sub(self.max_cents)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub objects: Vec<CatalogObject>,
}

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.json");

impl Catalog {
    pub fn default_catalog() -> Self {
        Self::from_json_str(DEFAULT_CATALOG, "default_catalog.json")
            .expect("shipped catalog is valid")
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let catalog: Catalog =
            serde_json::from_str(text).map_err(|e| ConfigError::syntax(source_name, &e))?;
        let invalid = |path: String, message: String| ConfigError::Invalid {
            source_name: source_name.to_string(),
            location: crate::error::ConfigLocation {
                line: crate::config::locate_line(text, &path),
                path,
            },
            message,
        };
        if catalog.objects.is_empty() {
            return Err(invalid("objects".into(), ExerciseError::EmptyCatalog.to_string()));
        }
        for (i, obj) in catalog.objects.iter().enumerate() {
            if obj.min_cents == 0 || obj.min_cents > obj.max_cents {
                return Err(invalid(
                    format!("objects.{}", obj.id),
                    format!("object #{i} has an empty price band"),
                ));
            }
        }
        Ok(catalog)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// Uniform pick among objects whose band contains the price, otherwise the
    /// nearest band (first in catalog order on ties). Consumes one draw only
    /// when some band contains the price.
    pub fn pick_object<R: Rng + ?Sized>(
        &self,
        price: Price,
        rng: &mut R,
    ) -> Result<&CatalogObject, ExerciseError> {
        if self.objects.is_empty() {
            return Err(ExerciseError::EmptyCatalog);
        }
        let eligible: Vec<&CatalogObject> =
            self.objects.iter().filter(|o| o.distance(price) == 0).collect();
        if eligible.is_empty() {
            let nearest = self
                .objects
                .iter()
                .min_by_key(|o| o.distance(price))
                .expect("non-empty");
            return Ok(nearest);
        }
        Ok(eligible[rng.random_range(0..eligible.len())])
    }
}

/// Largest-first decomposition over `denominations` (ascending).
///
/// Exact for any amount as long as the set contains 1.
pub fn greedy_decomposition(cents: u32, denominations: &[u32]) -> Vec<u32> {
    let mut rest = cents;
    let mut items = Vec::new();
    for &d in denominations.iter().rev() {
        while d > 0 && rest >= d {
            items.push(d);
            rest -= d;
        }
    }
    items
}

/// Greedy core plus 4-8 distractors drawn from face values not above the
/// largest one used by the core. Sorted largest first.
pub fn build_wallet<R: Rng + ?Sized>(price: Price, denominations: &[u32], rng: &mut R) -> Vec<u32> {
    let mut wallet = greedy_decomposition(price.cents(), denominations);
    let cap = wallet.first().copied().unwrap_or(1);
    let pool: Vec<u32> = denominations.iter().copied().filter(|&d| d <= cap).collect();
    let distractors = rng.random_range(4..=8);
    for _ in 0..distractors {
        wallet.push(pool[rng.random_range(0..pool.len())]);
    }
    wallet.sort_unstable_by(|a, b| b.cmp(a));
    wallet
}

/// One concrete exercise built from an activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseInstance {
    pub activity: Activity,
    /// Parameter id to value id, for display.
    pub params: BTreeMap<String, String>,
    pub exercise_type: u8,
    pub presentation: Presentation,
    pub cents_notation: CentsNotation,
    pub money: MoneyKind,
    pub price_cents: u32,
    #[serde(flatten)]
    pub rendering: PriceRendering,
    pub object_id: String,
    pub object_name: String,
    pub object_image: String,
    /// Face values in cents, largest first.
    pub wallet: Vec<u32>,
    pub trial_limit: u8,
}

impl ExerciseInstance {
    pub fn price(&self) -> Price {
        Price(self.price_cents)
    }
}

/// Everything needed to instantiate exercises for a scenario.
#[derive(Debug, Clone, Copy)]
pub struct ExerciseContext<'a> {
    pub space: &'a ParameterSpace,
    pub binding: &'a MoneyBinding,
    pub catalog: &'a Catalog,
    pub denominations: &'a [u32],
    pub trial_limit: u8,
}

impl ExerciseContext<'_> {
    /// Draw order: price digits, object, wallet.
    pub fn instantiate<R: Rng + ?Sized>(
        &self,
        activity: &Activity,
        rng: &mut R,
    ) -> Result<ExerciseInstance, ExerciseError> {
        let money = self.binding.resolve(activity);
        let price = generate_price(money.exercise_type, rng)?;
        let object = self.catalog.pick_object(price, rng)?;
        let wallet = build_wallet(price, self.denominations, rng);
        let params = self
            .space
            .parameters()
            .iter()
            .zip(activity.values())
            .map(|(p, &v)| (p.id.clone(), p.values[v].clone()))
            .collect();
        Ok(ExerciseInstance {
            activity: activity.clone(),
            params,
            exercise_type: money.exercise_type,
            presentation: money.presentation,
            cents_notation: money.notation,
            money: money.money,
            price_cents: price.cents(),
            rendering: PriceRendering::new(price, money.presentation, money.notation),
            object_id: object.id.clone(),
            object_name: object.name.clone(),
            object_image: object.image.clone(),
            wallet,
            trial_limit: self.trial_limit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSubmission {
    /// Face values in cents, drawn from the wallet.
    pub items: Vec<u32>,
    /// 1-based trial number.
    pub trial: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    /// `difference_cents` is submitted sum minus price.
    Incorrect { difference_cents: i64 },
    /// Last trial failed; carries the canonical composition.
    Solution {
        difference_cents: i64,
        solution: Vec<u32>,
    },
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::Correct)
    }

    /// Whether this verdict ends the exercise.
    pub fn closes_round(&self) -> bool {
        !matches!(self, Verdict::Incorrect { .. })
    }
}

/// `true` if `items` is a sub-multiset of `wallet`; on failure, returns the
/// first unavailable item.
fn check_drawn_from(items: &[u32], wallet: &[u32]) -> Result<(), u32> {
    let mut available: BTreeMap<u32, usize> = BTreeMap::new();
    for &w in wallet {
        *available.entry(w).or_default() += 1;
    }
    for &item in items {
        match available.get_mut(&item) {
            Some(n) if *n > 0 => *n -= 1,
            _ => return Err(item),
        }
    }
    Ok(())
}

pub fn validate_answer(
    submission: &AnswerSubmission,
    instance: &ExerciseInstance,
    denominations: &[u32],
) -> Result<Verdict, ExerciseError> {
    if submission.trial == 0 || submission.trial > instance.trial_limit {
        return Err(ExerciseError::TrialOutOfRange {
            trial: submission.trial,
            limit: instance.trial_limit,
        });
    }
    check_drawn_from(&submission.items, &instance.wallet)
        .map_err(|cents| ExerciseError::ItemNotInWallet { cents })?;
    let sum: i64 = submission.items.iter().map(|&c| c as i64).sum();
    let difference_cents = sum - instance.price_cents as i64;
    Ok(if difference_cents == 0 {
        Verdict::Correct
    } else if submission.trial >= instance.trial_limit {
        Verdict::Solution {
            difference_cents,
            solution: greedy_decomposition(instance.price_cents, denominations),
        }
    } else {
        Verdict::Incorrect { difference_cents }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(price: u32, wallet: Vec<u32>) -> ExerciseInstance {
        ExerciseInstance {
            activity: Activity::new(vec![0, 0, 0, 0]),
            params: BTreeMap::new(),
            exercise_type: 1,
            presentation: Presentation::WrittenSpoken,
            cents_notation: CentsNotation::EuroSign,
            money: MoneyKind::Real,
            price_cents: price,
            rendering: PriceRendering::new(
                Price(price),
                Presentation::WrittenSpoken,
                CentsNotation::EuroSign,
            ),
            object_id: "x".into(),
            object_name: "x".into(),
            object_image: "x".into(),
            wallet,
            trial_limit: 3,
        }
    }

    #[test]
    fn prices_from_documented_digits() {
        assert_eq!(price_from_digits(1, &[5, 1]).unwrap().cents(), 5100);
        assert_eq!(price_from_digits(2, &[2, 3]).unwrap().cents(), 2300);
        assert_eq!(price_from_digits(3, &[8, 4]).unwrap().cents(), 8400);
        assert_eq!(price_from_digits(4, &[5, 1, 2, 5]).unwrap().cents(), 5125);
        assert_eq!(price_from_digits(5, &[4, 3, 5, 1]).unwrap().cents(), 4351);
        assert_eq!(price_from_digits(6, &[8, 4, 3, 7]).unwrap().cents(), 8437);
    }

    #[test]
    fn unknown_exercise_type_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            generate_price(7, &mut rng),
            Err(ExerciseError::UnknownExerciseType(7))
        );
        assert!(generate_price(0, &mut rng).is_err());
    }

    #[test]
    fn generated_digits_respect_their_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for t in 1..=6u8 {
            let pattern = digit_pattern(t).unwrap();
            for _ in 0..10_000 {
                let p = generate_price(t, &mut rng).unwrap().cents();
                let digits = [p / 1000, p / 100 % 10, p / 10 % 10, p % 10];
                for (class, d) in pattern.iter().zip(digits) {
                    assert!(class.contains(d as u8), "type {t} price {p}");
                }
                if t <= 3 {
                    assert_eq!(p % 100, 0);
                }
                assert!(p < 10_000);
            }
        }
    }

    #[test]
    fn greedy_core_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let contains = |wallet: &[u32], core: &[u32]| {
            let mut w = wallet.to_vec();
            core.iter().all(|c| match w.iter().position(|x| x == c) {
                Some(i) => {
                    w.remove(i);
                    true
                }
                None => false,
            })
        };
        let w = build_wallet(Price(5100), &EURO_DENOMINATIONS, &mut rng);
        assert!(contains(&w, &[5000, 100]));
        let w = build_wallet(Price(1), &EURO_DENOMINATIONS, &mut rng);
        assert!(contains(&w, &[1]));
        let w = build_wallet(Price(5125), &EURO_DENOMINATIONS, &mut rng);
        assert!(contains(&w, &[5000, 100, 20, 5]));
        assert_eq!(greedy_decomposition(5125, &EURO_DENOMINATIONS), vec![5000, 100, 20, 5]);
    }

    #[test]
    fn wallet_has_four_to_eight_distractors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for cents in [1, 99, 5100, 8437, 9999] {
            let core = greedy_decomposition(cents, &EURO_DENOMINATIONS).len();
            for _ in 0..50 {
                let w = build_wallet(Price(cents), &EURO_DENOMINATIONS, &mut rng);
                assert!((core + 4..=core + 8).contains(&w.len()));
            }
        }
    }

    #[test]
    fn validation_examples() {
        let inst = instance(5100, vec![5000, 2000, 100, 50, 20]);
        let v = |items: Vec<u32>, trial| {
            validate_answer(&AnswerSubmission { items, trial }, &inst, &EURO_DENOMINATIONS)
        };
        assert_eq!(v(vec![5000, 100], 1), Ok(Verdict::Correct));
        assert_eq!(
            v(vec![], 1),
            Ok(Verdict::Incorrect {
                difference_cents: -5100
            })
        );
        assert_eq!(
            v(vec![5000], 3),
            Ok(Verdict::Solution {
                difference_cents: -100,
                solution: vec![5000, 100]
            })
        );
        assert_eq!(
            v(vec![100, 100], 1),
            Err(ExerciseError::ItemNotInWallet { cents: 100 })
        );
        assert_eq!(
            v(vec![5000], 4),
            Err(ExerciseError::TrialOutOfRange { trial: 4, limit: 3 })
        );
        assert!(v(vec![5000], 0).is_err());
    }

    #[test]
    fn object_pick_and_fallback() {
        let catalog = Catalog {
            objects: vec![CatalogObject {
                id: "scooter".into(),
                name: "Scooter".into(),
                image: "scooter.png".into(),
                min_cents: 4000,
                max_cents: 8000,
            }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(catalog.pick_object(Price(5100), &mut rng).unwrap().id, "scooter");
        assert_eq!(catalog.pick_object(Price(150), &mut rng).unwrap().id, "scooter");
        let empty = Catalog { objects: vec![] };
        assert_eq!(
            empty.pick_object(Price(150), &mut rng),
            Err(ExerciseError::EmptyCatalog)
        );
    }

    #[test]
    fn object_pick_is_deterministic() {
        let catalog = Catalog::default_catalog();
        let picks = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| catalog.pick_object(Price(2500), &mut rng).unwrap().id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(picks(5), picks(5));
    }

    #[test]
    fn default_catalog_covers_every_price() {
        let catalog = Catalog::default_catalog();
        assert_eq!(catalog.objects.len(), 30);
        for cents in (100..=9999).step_by(1) {
            assert!(
                catalog.objects.iter().any(|o| o.distance(Price(cents)) == 0),
                "{cents}"
            );
        }
    }

    #[test]
    fn price_strings() {
        let p = Price(5125);
        assert_eq!(price_written(p, CentsNotation::Comma), "51,25€");
        assert_eq!(price_written(p, CentsNotation::EuroSign), "51€25");
        assert_eq!(price_written(Price(5100), CentsNotation::EuroSign), "51€");
        assert_eq!(price_written(Price(5105), CentsNotation::EuroSign), "51€05");
        assert_eq!(price_spoken_text(p), "51 euros 25");
        assert_eq!(price_spoken_text(Price(100)), "1 euro");
        let r = PriceRendering::new(p, Presentation::Spoken, CentsNotation::Comma);
        assert!(!r.show_written && r.speak);
    }
}
