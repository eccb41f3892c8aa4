use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderStatus {
    Pending,
    Shipped,
    Cancelled,
    Modified,
}

impl fmt::Display for OrderStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OrderStatus::Pending => "pending",
            OrderStatus::Shipped => "shipped",
            OrderStatus::Cancelled => "cancelled",
            OrderStatus::Modified => "modified",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineItem {
    pub product_id: String,
    pub variant_id: String,
    /// Minor currency units.
    pub price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order {
    pub user_id: String,
    pub items: BTreeMap<String, LineItem>,
    pub status: OrderStatus,
    pub payment_method: String,
    #[serde(default)]
    pub cancel_reason: Option<String>,
    #[serde(default)]
    pub refund_method: Option<String>,
    #[serde(default)]
    pub settlement_method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub name: String,
    pub payment_methods: Vec<String>,
    pub membership: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub description: String,
    pub price: u64,
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub name: String,
    pub variants: BTreeMap<String, Variant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetailState {
    pub orders: BTreeMap<String, Order>,
    pub users: BTreeMap<String, User>,
    pub catalog: BTreeMap<String, Product>,
}

impl RetailState {
    /// Product that owns `variant_id`, if any.
    pub fn product_of_variant(&self, variant_id: &str) -> Option<(&str, &Variant)> {
        self.catalog.iter().find_map(|(pid, p)| {
            p.variants.get(variant_id).map(|v| (pid.as_str(), v))
        })
    }

    /// JSON view used by canonical paths and policy conditions.
    pub fn view(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("state serialization is infallible")
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::Fixture(msg));
        for (pid, product) in &self.catalog {
            if product.variants.is_empty() {
                return bad(format!("product {pid} has no variants"));
            }
            for (vid, v) in &product.variants {
                if v.price == 0 {
                    return bad(format!("variant {vid} has a non-positive price"));
                }
                if self.catalog.iter().filter(|(_, p)| p.variants.contains_key(vid)).count() > 1 {
                    return bad(format!("variant id {vid} is not unique"));
                }
            }
        }
        for (oid, order) in &self.orders {
            let Some(user) = self.users.get(&order.user_id) else {
                return bad(format!("order {oid} references unknown user {}", order.user_id));
            };
            if !user.payment_methods.contains(&order.payment_method) {
                return bad(format!("order {oid} paid with a method not on file"));
            }
            for (iid, item) in &order.items {
                if item.price == 0 {
                    return bad(format!("item {iid} of order {oid} has a non-positive price"));
                }
                let resolves = self
                    .catalog
                    .get(&item.product_id)
                    .is_some_and(|p| p.variants.contains_key(&item.variant_id));
                if !resolves {
                    return bad(format!("item {iid} of order {oid} references an unknown variant"));
                }
            }
        }
        for key in self.orders.keys().chain(self.users.keys()).chain(self.catalog.keys()) {
            if key.contains('.') {
                return bad(format!("identifier `{key}` contains a path separator"));
            }
        }
        Ok(())
    }
}

/// Looks up a dotted path (`orders.W1001.status`) in a JSON view.
pub fn lookup<'a>(view: &'a serde_json::Value, path: &str) -> Option<&'a serde_json::Value> {
    lookup_keys(view, path.split('.'))
}

pub(crate) fn lookup_keys<I, S>(view: &serde_json::Value, keys: I) -> Option<&serde_json::Value>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    keys.into_iter().try_fold(view, |node, key| match node {
        serde_json::Value::Object(map) => map.get(key.as_ref()),
        serde_json::Value::Array(items) => key.as_ref().parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}
