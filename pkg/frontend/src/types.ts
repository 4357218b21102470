// Wire shapes, matching the canonical field names of the protocol.

export interface SocialIdentityWire {
  network: string
  social_id: string
  social_name: string
}

export interface PolicyWire {
  kind: 'all_friends' | 'list'
  list_ref?: string
}

export interface ItemViewWire {
  data_type: string
  data_value: string
  data_algorithm: string
  specificity: 'device' | 'user'
  sensitivity: 'public' | 'private'
  binding_type: 'owner' | 'user_asserted'
  description: string
  created_at: number
  expires_at: number
  owner: SocialIdentityWire | null
  creator: { platform: string; app_id: string } | null
  device_id: string
  is_owner: boolean
  object_id?: number
  sharing_policy?: PolicyWire
  policy_source?: 'app' | 'user_override'
}

export interface PolicyOption {
  policy: PolicyWire
  displayName: string
}

/** One row of the "My data" screen. */
export interface OwnedRow {
  objectId: number
  dataType: string
  dataValue: string
  description: string
  deviceId: string
  expiresAt: number
  policy: PolicyWire
  overridden: boolean
}

/** One row of the "Shared with me" screen: never a policy, never an id. */
export interface SharedRow {
  dataType: string
  dataValue: string
  description: string
  deviceId: string
  expiresAt: number
  ownerName: string
  ownerSocialId: string
}

export function policyLabel(policy: PolicyWire): string {
  return policy.kind === 'all_friends' ? 'all friends' : `list:${policy.list_ref ?? ''}`
}

export function samePolicy(a: PolicyWire, b: PolicyWire): boolean {
  return a.kind === b.kind && (a.list_ref ?? '') === (b.list_ref ?? '')
}
